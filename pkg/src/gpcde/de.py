"""Density evolution for iterative bounded-distance decoding over parallel channels.

One parameter is tracked per CN class ``(i, t)``: the probability that a
corrupted bit attached to such a component code is still unresolved by
it after ``l`` iterations. All classes start at 1 and are updated with a
flooding schedule

    x[i,t] <- P(Poisson(lambda[i,t]) >= t),
    lambda[i,t] = (1/L) sum_j eta[i,j] sum_t' c~[t,t'](i,j) tau[t'](j) x[j,t'].

The argument is linear in ``x`` and, under ``c_q = c * b_q``, also linear
in ``c``; both facts are used to batch threshold searches.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bitmapper import BitMapper, mix
from .gpc import CnClass, CodeSpec, enumerate_vn_classes

# decoder iteration count used for DE predictions unless told otherwise
DEFAULT_ITERATIONS = 50
DEFAULT_EPS = 1e-9
DEFAULT_SEARCH_HI = 50.0
DEFAULT_TOL = 1e-3
MAX_PROBES = 40


class Outcome(str, Enum):
    SUCCESS = "success"
    STALL = "stall"
    EXHAUSTED = "exhausted"


class DeConfigError(ValueError):
    pass


class BracketError(RuntimeError):
    """The upper end of a threshold search is itself admissible."""


def poisson_tail(t, x):
    """``P(Poisson(x) >= t)``, elementwise over broadcastable ``t`` and ``x``.

    Accumulates ``e^-x x^i / i!`` by the term recurrence and returns the
    complement, so the absolute error stays at rounding level for any
    ``x`` (no factorials or powers are formed). ``t = 0`` gives 1.
    """
    t_arr = np.asarray(t)
    x_arr = np.asarray(x, dtype=float)
    if np.any(t_arr < 0) or np.any(x_arr < 0):
        raise ValueError("poisson_tail needs t >= 0 and x >= 0")
    t_hi = int(t_arr.max(initial=0))
    term = np.exp(-x_arr)
    head = np.where(t_arr > 0, term, 0.0)
    for i in range(1, t_hi):
        term = term * x_arr / i
        head = head + np.where(t_arr > i, term, 0.0)
    out = np.clip(1.0 - head, 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def _quality_key(i: int, j: int, t: int, t2: int) -> tuple[int, int, int, int]:
    if i > j:
        i, j, t, t2 = j, i, t2, t
    if i == j and t2 < t:
        t, t2 = t2, t
    return (i, j, t, t2)


@dataclass(frozen=True)
class DeState:
    classes: tuple[CnClass, ...]
    x: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, classes) -> "DeState":
        classes = tuple(classes)
        return cls(classes, np.ones(len(classes)), 0)

    def as_dict(self) -> dict[CnClass, float]:
        return dict(zip(self.classes, self.x.tolist()))


def weight_matrix(spec: CodeSpec, virtual_qualities: dict) -> np.ndarray:
    """Matrix ``W`` with ``lambda = W @ x`` over ``spec.cn_classes()``."""
    classes = spec.cn_classes()
    W = np.zeros((len(classes), len(classes)))
    for a, (i, t) in enumerate((c.position, c.capability) for c in classes):
        for b, (j, t2) in enumerate((c.position, c.capability) for c in classes):
            if not spec.eta[i][j]:
                continue
            key = _quality_key(i, j, t, t2)
            if key not in virtual_qualities:
                raise DeConfigError(f"no virtual quality for VN class {key}")
            W[a, b] = virtual_qualities[key] * spec.tau[j][t2 - 1] / spec.L
    return W


@dataclass(frozen=True)
class DeProblem:
    """A code together with one effective quality per VN class.

    ``virtual_qualities`` maps ``(i, j, t, t')`` (canonical VN-class key)
    to ``c~[t,t'](i,j)``.
    """

    spec: CodeSpec
    virtual_qualities: dict

    def __post_init__(self):
        expected = {c.key for c in enumerate_vn_classes(self.spec)}
        got = set(self.virtual_qualities)
        if got != expected:
            raise DeConfigError(
                f"virtual qualities must cover exactly the VN classes; "
                f"missing {sorted(expected - got)}, unexpected {sorted(got - expected)}"
            )
        object.__setattr__(self, "_W", weight_matrix(self.spec, self.virtual_qualities))
        classes = tuple(self.spec.cn_classes())
        object.__setattr__(self, "_classes", classes)
        object.__setattr__(self, "_caps", np.array([c.capability for c in classes]))

    @classmethod
    def from_class_qualities(cls, spec: CodeSpec, class_qualities) -> "DeProblem":
        vn = enumerate_vn_classes(spec)
        q = np.asarray(class_qualities, dtype=float)
        if q.shape != (len(vn),):
            raise DeConfigError(f"expected {len(vn)} class qualities, got shape {q.shape}")
        return cls(spec, {c.key: float(v) for c, v in zip(vn, q)})

    @classmethod
    def from_mapper(cls, spec: CodeSpec, mapper, qualities) -> "DeProblem":
        return cls.from_class_qualities(spec, mix(mapper, qualities))

    @property
    def classes(self) -> tuple[CnClass, ...]:
        return self._classes

    @property
    def capabilities(self) -> np.ndarray:
        return self._caps

    @property
    def W(self) -> np.ndarray:
        return self._W

    def initial_state(self) -> DeState:
        return DeState.initial(self._classes)


def de_step(problem: DeProblem, state: DeState) -> DeState:
    if state.classes != problem.classes:
        raise DeConfigError("state does not belong to this problem")
    x = poisson_tail(problem.capabilities, problem.W @ state.x)
    return DeState(state.classes, np.atleast_1d(x), state.iteration + 1)


def _stopped(new_max, old_max, eps):
    success = new_max < eps
    stall = ~success & (np.abs(new_max - old_max) < eps * 1e-3)
    return success, stall


def de_run(problem: DeProblem, max_iter: int = DEFAULT_ITERATIONS, eps: float = DEFAULT_EPS):
    """Iterate from the all-ones state; returns ``(state, Outcome)``."""
    if max_iter < 1 or eps <= 0:
        raise ValueError("need max_iter >= 1 and eps > 0")
    state = problem.initial_state()
    for _ in range(max_iter):
        new = de_step(problem, state)
        success, stall = _stopped(new.x.max(), state.x.max(), eps)
        state = new
        if success:
            return state, Outcome.SUCCESS
        if stall:
            return state, Outcome.STALL
    return state, Outcome.EXHAUSTED


def de_trace(problem: DeProblem, iterations: int) -> list[DeState]:
    """States ``x^(0)..x^(iterations)``."""
    states = [problem.initial_state()]
    for _ in range(iterations):
        states.append(de_step(problem, states[-1]))
    return states


def residual_fractions(problem: DeProblem, state: DeState) -> np.ndarray:
    """Per VN class, the probability that a corrupted bit survives both of its CNs."""
    idx = {c: a for a, c in enumerate(problem.classes)}
    out = []
    for vc in enumerate_vn_classes(problem.spec):
        xa = state.x[idx[CnClass(vc.i, vc.t)]]
        xb = state.x[idx[CnClass(vc.j, vc.t2)]]
        out.append(xa * xb)
    return np.array(out)


def run_batch(W: np.ndarray, caps: np.ndarray, max_iter: int, eps: float) -> np.ndarray:
    """Classify a batch of problems ``W[b]`` at once; returns an array of Outcome values."""
    B = W.shape[0]
    x = np.ones((B, W.shape[1]))
    outcome = np.full(B, Outcome.EXHAUSTED.value, dtype=object)
    active = np.arange(B)
    for _ in range(max_iter):
        xa = x[active]
        new = poisson_tail(caps, np.einsum("bij,bj->bi", W[active], xa))
        success, stall = _stopped(new.max(axis=1), xa.max(axis=1), eps)
        x[active] = new
        outcome[active[success]] = Outcome.SUCCESS.value
        outcome[active[stall]] = Outcome.STALL.value
        active = active[~(success | stall)]
        if active.size == 0:
            break
    return outcome


def is_admissible(
    spec: CodeSpec,
    mapper,
    qualities,
    max_iter: int = DEFAULT_ITERATIONS,
    eps: float = DEFAULT_EPS,
) -> bool:
    _, outcome = de_run(DeProblem.from_mapper(spec, mapper, qualities), max_iter, eps)
    return outcome is Outcome.SUCCESS


def _unit_weights(spec: CodeSpec, matrices: np.ndarray, b: np.ndarray) -> np.ndarray:
    vn = enumerate_vn_classes(spec)
    out = []
    for A in matrices:
        cq = A @ b
        out.append(weight_matrix(spec, {c.key: float(v) for c, v in zip(vn, cq)}))
    return np.array(out)


def thresholds(
    spec: CodeSpec,
    matrices,
    b,
    search_hi: float = DEFAULT_SEARCH_HI,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_ITERATIONS,
    eps: float = DEFAULT_EPS,
    max_probes: int = MAX_PROBES,
) -> np.ndarray:
    """Decoding thresholds for a stack of mapper matrices, bisected together.

    Each search runs on ``[0, search_hi]`` with qualities ``c * b`` until
    the bracket is narrower than ``tol`` (or ``max_probes`` is reached)
    and returns the bracket midpoint.
    """
    b = np.asarray(b, dtype=float)
    if abs(b.mean() - 1.0) > 1e-9:
        raise ValueError(f"b profile must have mean 1, got {b.mean()!r}")
    matrices = np.asarray(matrices, dtype=float)
    if matrices.ndim == 2:
        matrices = matrices[None]
    W1 = _unit_weights(spec, matrices, b)
    caps = np.array([c.capability for c in spec.cn_classes()])
    B = W1.shape[0]
    top = run_batch(search_hi * W1, caps, max_iter, eps)
    if np.any(top == Outcome.SUCCESS.value):
        raise BracketError(f"c = {search_hi} is admissible; enlarge the search interval")
    lo = np.zeros(B)
    hi = np.full(B, float(search_hi))
    probes = 0
    while hi[0] - lo[0] > tol and probes < max_probes:
        mid = 0.5 * (lo + hi)
        ok = run_batch(mid[:, None, None] * W1, caps, max_iter, eps) == Outcome.SUCCESS.value
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        probes += 1
    return 0.5 * (lo + hi)


def threshold(
    spec: CodeSpec,
    mapper,
    b,
    search_hi: float = DEFAULT_SEARCH_HI,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_ITERATIONS,
    eps: float = DEFAULT_EPS,
    max_probes: int = MAX_PROBES,
) -> float:
    """Largest average quality ``c`` with ``c * b`` admissible, to within ``tol``.

    With the default ``max_iter`` admissibility means the DE reaches ``eps``
    within the decoder's iteration budget; pass a large ``max_iter`` for the
    infinite-iteration limit.
    """
    A = mapper.A if isinstance(mapper, BitMapper) else np.asarray(mapper, dtype=float)
    return float(thresholds(spec, A[None], b, search_hi, tol, max_iter, eps, max_probes)[0])

