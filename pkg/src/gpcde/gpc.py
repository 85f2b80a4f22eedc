"""Deterministic generalized product codes C_n(eta, tau).

A code is fixed by the number of check nodes ``n``, a binary symmetric
``L x L`` connectivity matrix ``eta`` and, for every position, a
distribution ``tau`` over component-code erasure-correcting capabilities.
Positions are 0-based throughout the Python API.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FRACTION_TOL = 1e-9


class CodeSpecError(ValueError):
    """Raised for an invalid code parametrization; the message names the field."""


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Round ``weights`` (summing to ``total`` up to float noise) to integers.

    The integer parts are kept and the remaining units go to the largest
    fractional parts. Ties go to the higher index.
    """
    w = [float(x) for x in weights]
    floors = [math.floor(x + 1e-12) for x in w]
    deficit = total - sum(floors)
    if deficit < 0 or deficit > len(w):
        raise ValueError(f"weights sum to {sum(w)!r}, cannot round to {total}")
    rema = [round(x - f, 12) for x, f in zip(w, floors)]
    order = sorted(range(len(w)), key=lambda i: (-rema[i], -i))
    for i in order[:deficit]:
        floors[i] += 1
    return floors


@dataclass(frozen=True)
class CnClass:
    position: int
    capability: int


@dataclass(frozen=True)
class VnClass:
    """Bits sharing a block ``(i, j)`` and endpoint capabilities ``(t, t')``.

    ``t`` belongs to position ``i`` and ``t'`` to position ``j``, with
    ``i <= j``; inside a diagonal block ``t <= t'``.
    """

    i: int
    j: int
    t: int
    t2: int
    index: int
    count: int
    fraction: float

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.i, self.j, self.t, self.t2)


@dataclass(frozen=True)
class CodeSpec:
    """Parameters ``(n, eta, tau)`` of a generalized product code.

    ``tau[i][t - 1]`` is the fraction of component codes at position ``i``
    that correct ``t`` erasures.
    """

    n: int
    eta: tuple[tuple[int, ...], ...]
    tau: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        eta = tuple(tuple(int(v) for v in row) for row in self.eta)
        tau = tuple(tuple(float(v) for v in row) for row in self.tau)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "tau", tau)
        self._validate()

    def _validate(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise CodeSpecError(f"n: must be a positive integer, got {self.n!r}")
        L = len(self.eta)
        if L == 0:
            raise CodeSpecError("eta: matrix is empty")
        for i, row in enumerate(self.eta):
            if len(row) != L:
                raise CodeSpecError(f"eta[{i}]: expected {L} entries, got {len(row)}")
            for j, v in enumerate(row):
                if v not in (0, 1):
                    raise CodeSpecError(f"eta[{i}][{j}]: entries must be 0 or 1")
                if self.eta[j][i] != v:
                    raise CodeSpecError(f"eta[{i}][{j}]: matrix is not symmetric")
            if not any(row):
                raise CodeSpecError(f"eta[{i}]: position has no connections")
        if self.n % L:
            raise CodeSpecError(f"n: {self.n} is not divisible by L = {L}")
        if len(self.tau) != L:
            raise CodeSpecError(f"tau: expected {L} distributions, got {len(self.tau)}")
        t_max = len(self.tau[0])
        if t_max < 1:
            raise CodeSpecError("tau[0]: empty distribution")
        for i, dist in enumerate(self.tau):
            if len(dist) != t_max:
                raise CodeSpecError(f"tau[{i}]: expected length t_max = {t_max}")
            if any(not math.isfinite(f) or f < 0 for f in dist):
                raise CodeSpecError(f"tau[{i}]: fractions must be finite and >= 0")
            if abs(sum(dist) - 1.0) > FRACTION_TOL:
                raise CodeSpecError(f"tau[{i}]: fractions sum to {sum(dist)!r}, not 1")

    @property
    def L(self) -> int:
        return len(self.eta)

    @property
    def d(self) -> int:
        """Block size n / L."""
        return self.n // self.L

    @property
    def t_max(self) -> int:
        return len(self.tau[0])

    def capabilities(self, position: int) -> list[int]:
        """Capabilities with a positive fraction at ``position``, ascending."""
        return [t for t in range(1, self.t_max + 1) if self.tau[position][t - 1] > 0]

    def cn_classes(self) -> list[CnClass]:
        return [CnClass(i, t) for i in range(self.L) for t in self.capabilities(i)]

    def blocks(self) -> list[tuple[int, int]]:
        """Connected position pairs ``(i, j)``, ``i <= j``, in lexicographic order."""
        return [(i, j) for i in range(self.L) for j in range(i, self.L) if self.eta[i][j]]

    @classmethod
    def from_dict(cls, doc: dict) -> "CodeSpec":
        """Build from ``{"n": .., "eta": [[..]], "tau": [[{"t":.., "fraction":..}, ..], ..]}``."""
        for key in ("n", "eta", "tau"):
            if key not in doc:
                raise CodeSpecError(f"{key}: missing field")
        n = doc["n"]
        if isinstance(n, bool) or not isinstance(n, int):
            raise CodeSpecError(f"n: must be an integer, got {n!r}")
        eta = doc["eta"]
        if not isinstance(eta, list) or not all(isinstance(r, list) for r in eta):
            raise CodeSpecError("eta: must be a list of lists")
        raw_tau = doc["tau"]
        if not isinstance(raw_tau, list):
            raise CodeSpecError("tau: must be a list with one entry per position")
        t_max = 0
        parsed = []
        for i, entries in enumerate(raw_tau):
            if not isinstance(entries, list) or not entries:
                raise CodeSpecError(f"tau[{i}]: must be a non-empty list")
            masses = {}
            for k, item in enumerate(entries):
                if not isinstance(item, dict) or "t" not in item or "fraction" not in item:
                    raise CodeSpecError(f"tau[{i}][{k}]: expected {{'t': int, 'fraction': float}}")
                t = item["t"]
                if isinstance(t, bool) or not isinstance(t, int) or t < 1:
                    raise CodeSpecError(f"tau[{i}][{k}].t: must be an integer >= 1")
                if t in masses:
                    raise CodeSpecError(f"tau[{i}][{k}].t: duplicate capability {t}")
                frac = item["fraction"]
                if isinstance(frac, bool) or not isinstance(frac, (int, float)):
                    raise CodeSpecError(f"tau[{i}][{k}].fraction: must be a number")
                masses[t] = float(frac)
            t_max = max(t_max, max(masses))
            parsed.append(masses)
        tau = [[m.get(t, 0.0) for t in range(1, t_max + 1)] for m in parsed]
        return cls(n=n, eta=eta, tau=tau)

    def to_dict(self) -> dict:
        tau = [
            [{"t": t, "fraction": f} for t, f in enumerate(dist, start=1) if f > 0]
            for dist in self.tau
        ]
        return {"n": self.n, "eta": [list(r) for r in self.eta], "tau": tau}


def load_code_spec(path: str | Path) -> CodeSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CodeSpecError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CodeSpecError(f"{path}: top-level value must be an object")
    return CodeSpec.from_dict(doc)


def hpc(n: int, tau: dict[int, float]) -> CodeSpec:
    """Half-product code (L = 1, eta = [[1]]) with capability masses ``tau``."""
    t_max = max(tau)
    return CodeSpec(n=n, eta=[[1]], tau=[[tau.get(t, 0.0) for t in range(1, t_max + 1)]])


def product_code(n: int, tau_rows: dict[int, float], tau_cols: dict[int, float] | None = None) -> CodeSpec:
    """Two-position product code; ``n`` counts row plus column codes."""
    tau_cols = tau_rows if tau_cols is None else tau_cols
    t_max = max(max(tau_rows), max(tau_cols))
    tau = [[m.get(t, 0.0) for t in range(1, t_max + 1)] for m in (tau_rows, tau_cols)]
    return CodeSpec(n=n, eta=[[0, 1], [1, 0]], tau=tau)


def _check_position(spec: CodeSpec, position: int):
    if not 0 <= position < spec.L:
        raise IndexError(f"position {position} out of range for L = {spec.L}")


def cn_degree(spec: CodeSpec, position: int) -> int:
    """Length of a component code at ``position``."""
    _check_position(spec, position)
    row = spec.eta[position]
    off = sum(v for j, v in enumerate(row) if j != position)
    return spec.d * off + row[position] * (spec.d - 1)


def code_length(spec: CodeSpec) -> int:
    d, L = spec.d, spec.L
    diag = sum(spec.eta[i][i] for i in range(L))
    off = sum(spec.eta[i][j] for i in range(L) for j in range(i + 1, L))
    return math.comb(d, 2) * diag + d * d * off


def capability_counts(spec: CodeSpec, position: int) -> list[tuple[int, int]]:
    """Number of component codes per capability at ``position``, summing to d.

    Only capabilities with a positive fraction are listed.
    """
    _check_position(spec, position)
    caps = spec.capabilities(position)
    counts = largest_remainder([spec.d * spec.tau[position][t - 1] for t in caps], spec.d)
    return list(zip(caps, counts))


def enumerate_vn_classes(spec: CodeSpec) -> list[VnClass]:
    """All VN classes in canonical order with exact and asymptotic sizes.

    Capability groups are consecutive ranges of local CN indices, so an
    off-diagonal block splits into the Cartesian product of the two
    positions' groups and a diagonal block into same-group triangles and
    cross-group rectangles.
    """
    d = spec.d
    counts = [dict(capability_counts(spec, i)) for i in range(spec.L)]
    # asymptotic block weights: d^2 off the diagonal, d^2 / 2 on it
    total_weight = sum(0.5 if i == j else 1.0 for i, j in spec.blocks())
    out = []
    for i, j in spec.blocks():
        ci, cj = spec.capabilities(i), spec.capabilities(j)
        for t in ci:
            for t2 in cj:
                if i == j and t2 < t:
                    continue
                fi, fj = spec.tau[i][t - 1], spec.tau[j][t2 - 1]
                if i != j:
                    count = counts[i][t] * counts[j][t2]
                    weight = fi * fj
                elif t == t2:
                    count = math.comb(counts[i][t], 2)
                    weight = 0.5 * fi * fi
                else:
                    count = counts[i][t] * counts[i][t2]
                    weight = fi * fj
                out.append(VnClass(i, j, t, t2, len(out), count, weight / total_weight))
    assert sum(c.count for c in out) == code_length(spec)
    return out


def class_fractions(spec: CodeSpec) -> np.ndarray:
    """Asymptotic class fractions m~_k in canonical order."""
    return np.array([c.fraction for c in enumerate_vn_classes(spec)])
