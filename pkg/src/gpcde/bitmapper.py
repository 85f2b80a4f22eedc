"""Bit-mapper matrices: allocation of VN classes to parallel channels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Tolerance:
    row: float
    column: float


# internally generated mappers (optimizer output)
STRICT = Tolerance(row=1e-9, column=1e-9)
# externally supplied matrices, e.g. printed to four decimals
LOOSE = Tolerance(row=1e-3, column=1e-3)


class MapperError(ValueError):
    def __init__(self, message: str, violations: list["Violation"] | None = None):
        super().__init__(message)
        self.violations = violations or []


@dataclass(frozen=True)
class Violation:
    kind: str  # "row-sum" | "negative" | "column-balance"
    index: tuple[int, ...]
    value: float
    deviation: float

    def __str__(self):
        if self.kind == "row-sum":
            return f"row {self.index[0]}: sums to {self.value:.6g} (deviation {self.deviation:.3g})"
        if self.kind == "negative":
            return f"entry {self.index}: negative value {self.value:.6g}"
        return (
            f"column {self.index[0]}: weighted usage {self.value:.6g} "
            f"(deviation {self.deviation:.3g} from 1/M)"
        )


def validate(A, class_fractions, tol: Tolerance = LOOSE) -> list[Violation]:
    """Every violated constraint of ``A`` against fractions ``m~``; empty if valid.

    Rows must be probability vectors and every channel must carry a
    ``1/M`` share of the bits: ``sum_k a[k, q] m~_k = 1/M``.
    """
    A = np.asarray(A, dtype=float)
    w = np.asarray(class_fractions, dtype=float)
    if A.ndim != 2 or w.ndim != 1 or A.shape[0] != w.shape[0]:
        raise MapperError(f"dimension mismatch: A is {A.shape}, fractions have length {w.shape}")
    K, M = A.shape
    out = []
    for k in range(K):
        s = A[k].sum()
        if abs(s - 1.0) > tol.row:
            out.append(Violation("row-sum", (k,), float(s), float(s - 1.0)))
    for k, q in zip(*np.nonzero(A < 0)):
        out.append(Violation("negative", (int(k), int(q)), float(A[k, q]), float(A[k, q])))
    usage = w @ A
    for q in range(M):
        dev = usage[q] - 1.0 / M
        if abs(dev) > tol.column:
            out.append(Violation("column-balance", (q,), float(usage[q]), float(dev)))
    return out


@dataclass(frozen=True)
class BitMapper:
    """A validated ``K x M`` allocation matrix."""

    A: np.ndarray
    class_fractions: np.ndarray
    tol: Tolerance = field(default=LOOSE, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        w = np.array(self.class_fractions, dtype=float)
        violations = validate(A, w, self.tol)
        if violations:
            raise MapperError(
                "invalid bit mapper: " + "; ".join(str(v) for v in violations), violations
            )
        A.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "class_fractions", w)

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def M(self) -> int:
        return self.A.shape[1]

    def to_dict(self) -> dict:
        return {"A": self.A.tolist()}


def uniform_mapper(K: int, M: int, class_fractions=None) -> BitMapper:
    if K < 1 or M < 1:
        raise ValueError(f"K and M must be >= 1, got K={K}, M={M}")
    if class_fractions is None:
        class_fractions = np.full(K, 1.0 / K)
    return BitMapper(np.full((K, M), 1.0 / M), class_fractions, STRICT)


def mix(A, qualities) -> np.ndarray:
    """Virtual-channel qualities ``c~_k = sum_q a[k, q] c_q``."""
    A = A.A if isinstance(A, BitMapper) else np.asarray(A, dtype=float)
    c = np.asarray(qualities, dtype=float)
    if c.shape != (A.shape[1],):
        raise MapperError(f"dimension mismatch: A is {A.shape}, qualities have shape {c.shape}")
    return A @ c


def load_matrix(path: str | Path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MapperError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict) or "A" not in doc:
        raise MapperError(f"{path}: expected an object with key 'A'")
    try:
        A = np.array(doc["A"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MapperError(f"{path}: A must be a numeric matrix ({exc})") from exc
    if A.ndim != 2:
        raise MapperError(f"{path}: A must be a K x M matrix")
    return A


def load_mapper(path: str | Path, class_fractions, tol: Tolerance = LOOSE) -> BitMapper:
    return BitMapper(load_matrix(path), class_fractions, tol)


def save_mapper(mapper: BitMapper, path: str | Path):
    Path(path).write_text(json.dumps(mapper.to_dict(), indent=2) + "\n")
