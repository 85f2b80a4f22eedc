"""Parallel channels and the 2^M-PAM / BRGC hard-decision abstraction.

Channel ``q`` (1-based in the formulas, 0-based in arrays) is the label
bit that toggles at ``2**(q-1)`` of the PAM decision boundaries, so
channel 1 is the most reliable bit and channel M the least reliable one.
SNR is in dB at every public interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

MAX_BITS = 16


class ChannelKind(str, Enum):
    ERASURE = "erasure"
    ERROR = "error"


@dataclass(frozen=True)
class ChannelScenario:
    """Effective channel qualities ``c_q``; probabilities are ``c_q / n``."""

    qualities: tuple[float, ...]
    kind: ChannelKind = ChannelKind.ERASURE

    def __post_init__(self):
        q = tuple(float(c) for c in self.qualities)
        if not q:
            raise ValueError("qualities: need at least one channel")
        if any(not math.isfinite(c) or c < 0 for c in q):
            raise ValueError(f"qualities: must be finite and nonnegative, got {q}")
        object.__setattr__(self, "qualities", q)
        object.__setattr__(self, "kind", ChannelKind(self.kind))

    @property
    def M(self) -> int:
        return len(self.qualities)

    def probabilities(self, n: int) -> np.ndarray:
        p = np.asarray(self.qualities) / n
        if np.any(p > 1):
            raise ValueError(f"quality exceeds n = {n}: probabilities {p}")
        return p


@dataclass(frozen=True)
class PamProfile:
    M: int
    b: tuple[float, ...]


def _check_bits(M: int):
    if not 1 <= M <= MAX_BITS:
        raise ValueError(f"M must be in [1, {MAX_BITS}], got {M}")


def pam_b_factors(M: int) -> np.ndarray:
    """Relative crossover factors ``b_q = M 2^(q-1) / (2^M - 1)``; mean 1."""
    _check_bits(M)
    return np.array([float(Fraction(M * 2 ** (q - 1), 2**M - 1)) for q in range(1, M + 1)])


def pam_profile(M: int) -> PamProfile:
    return PamProfile(M, tuple(pam_b_factors(M)))


def qfunc(x: float) -> float:
    """Gaussian tail probability."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(rho: float) -> float:
    return 10.0 * math.log10(rho)


def pam_energy(M: int) -> float:
    """Average energy of the ``{±1, ±3, ...}`` 2^M-PAM constellation."""
    return (4.0**M - 1.0) / 3.0


def avg_crossover(M: int, rho: float) -> float:
    """Nearest-neighbor average label-bit crossover probability at linear SNR ``rho``."""
    _check_bits(M)
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    scale = (2**M - 1) / (M * 2 ** (M - 1))
    return scale * qfunc(math.sqrt(3.0 * rho / (4.0**M - 1.0)))


def max_avg_crossover(M: int) -> float:
    """Supremum of ``avg_crossover`` (approached as rho -> 0)."""
    return (2**M - 1) / (M * 2 ** (M - 1)) * 0.5


def snr_from_quality(M: int, c: float, n: int, tol_db: float = 1e-4) -> float:
    """SNR in dB at which ``avg_crossover(M, rho) == c / n`` (bisection on dB)."""
    target = c / n
    if not 0 < target < max_avg_crossover(M):
        raise ValueError(f"c/n = {target!r} is outside the range of the crossover curve")
    lo, hi = -60.0, 20.0
    while avg_crossover(M, db_to_linear(hi)) > target:
        hi += 20.0
        if hi > 400:
            raise ValueError(f"c/n = {target!r} too small to invert")
    while avg_crossover(M, db_to_linear(lo)) < target:
        lo -= 20.0
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if avg_crossover(M, db_to_linear(mid)) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def quality_from_snr(M: int, rho_db: float, n: int) -> float:
    """Average effective quality ``n * avg_crossover`` at ``rho_db``."""
    return n * avg_crossover(M, db_to_linear(rho_db))


def scenario_from_pam(M: int, rho_db: float, n: int) -> ChannelScenario:
    c = quality_from_snr(M, rho_db, n)
    return ChannelScenario(tuple(c * pam_b_factors(M)), ChannelKind.ERROR)


def gray_labels(M: int) -> np.ndarray:
    """BRGC label of each PAM point, points ordered from most negative up."""
    idx = np.arange(2**M)
    return idx ^ (idx >> 1)


def label_bit(M: int, q: int) -> int:
    """Bit offset (from the LSB) carrying channel ``q`` (0-based)."""
    return M - 1 - q
