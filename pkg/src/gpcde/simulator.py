"""Finite-length Monte Carlo simulation with miscorrection-free iterative BDD.

The decoder only ever sees error (or erasure) positions, so no encoder is
needed: over bec / genie-bsc the all-zero codeword is sent, and over the
AWGN channel uniformly random labels stand in for a scrambled codeword.
"""

from __future__ import annotations

import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bitmapper import BitMapper
from .channel import db_to_linear, gray_labels, label_bit, pam_b_factors, pam_energy
from .gpc import CodeSpec, capability_counts, code_length, enumerate_vn_classes, largest_remainder

MAX_VNS = 2**31


class Mode(str, Enum):
    BEC = "bec"
    GENIE_BSC = "genie-bsc"
    AWGN_PAM = "awgn-pam"


@dataclass(frozen=True)
class CodeInstance:
    """Materialized Tanner graph; VN ``v`` joins CNs ``cn_a[v]`` and ``cn_b[v]``."""

    spec: CodeSpec
    cn_a: np.ndarray
    cn_b: np.ndarray
    cn_capability: np.ndarray
    vn_class: np.ndarray
    class_counts: np.ndarray
    # VN indices grouped by class (stable), with class start offsets
    class_order: np.ndarray = field(repr=False)
    class_offsets: np.ndarray = field(repr=False)

    @property
    def cn_count(self) -> int:
        return len(self.cn_capability)

    @property
    def vn_count(self) -> int:
        return len(self.cn_a)

    @property
    def K(self) -> int:
        return len(self.class_counts)

    @classmethod
    def from_arrays(cls, spec: CodeSpec, cn_a, cn_b, caps, vn_class=None) -> "CodeInstance":
        """Wrap explicit adjacency; classes default to those implied by CN positions."""
        cn_a = np.asarray(cn_a, dtype=np.int32)
        cn_b = np.asarray(cn_b, dtype=np.int32)
        caps = np.asarray(caps, dtype=np.int64)
        classes = enumerate_vn_classes(spec)
        if vn_class is None:
            vn_class = _classify(spec, classes, cn_a, cn_b, caps)
        vn_class = np.asarray(vn_class, dtype=np.int16)
        counts = np.bincount(vn_class, minlength=len(classes))
        order = np.argsort(vn_class, kind="stable").astype(np.int32)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return cls(spec, cn_a, cn_b, caps, vn_class, counts, order, offsets)

    def class_members(self, k: int) -> np.ndarray:
        return self.class_order[self.class_offsets[k] : self.class_offsets[k + 1]]


def _classify(spec, classes, cn_a, cn_b, caps) -> np.ndarray:
    d, L, T = spec.d, spec.L, spec.t_max + 1

    def code(i, j, t, t2):
        return ((i * L + j) * T + t) * T + t2

    keys = np.array([code(*c.key) for c in classes], dtype=np.int64)
    pa, pb = (cn_a // d).astype(np.int64), (cn_b // d).astype(np.int64)
    ta, tb = caps[cn_a], caps[cn_b]
    # put the lower position first; inside a diagonal block the smaller capability
    swap = (pa > pb) | ((pa == pb) & (ta > tb))
    pa, pb = np.where(swap, pb, pa), np.where(swap, pa, pb)
    ta, tb = np.where(swap, tb, ta), np.where(swap, ta, tb)
    vkeys = code(pa, pb, ta, tb)
    vn_class = np.searchsorted(keys, vkeys)
    if np.any(vn_class >= len(keys)) or not np.array_equal(keys[vn_class], vkeys):
        raise ValueError("adjacency contains VNs outside the code's VN classes")
    return vn_class


def instantiate(spec: CodeSpec) -> CodeInstance:
    """Build the deterministic graph of ``spec``.

    CN ``i*d + l`` is local index ``l`` at position ``i``. Blocks are laid
    out in lexicographic ``(i, j)`` order: an off-diagonal block holds all
    ``d x d`` local pairs row-major, a diagonal block the strict lower
    triangle ``l > l'``.
    """
    m = code_length(spec)
    if m >= MAX_VNS:
        raise MemoryError(f"code length {m} exceeds the supported maximum {MAX_VNS - 1}")
    d, L = spec.d, spec.L
    caps = np.empty(spec.n, dtype=np.int64)
    for i in range(L):
        groups = capability_counts(spec, i)
        caps[i * d : (i + 1) * d] = np.repeat([t for t, _ in groups], [c for _, c in groups])

    ca, cb = [], []
    for i, j in spec.blocks():
        if i == j:
            r, c = np.tril_indices(d, -1)
        else:
            r, c = np.divmod(np.arange(d * d), d)
        ca.append(r + i * d)
        cb.append(c + j * d)
    cn_a = np.concatenate(ca).astype(np.int32)
    cn_b = np.concatenate(cb).astype(np.int32)

    return CodeInstance.from_arrays(spec, cn_a, cn_b, caps)


def allocation_counts(instance: CodeInstance, mapper) -> np.ndarray:
    """Integer ``K x M`` bit counts per class and channel.

    Rows of the mapper are renormalized first, so each class is allocated
    exactly ``m_k`` bits even when the matrix was printed with rounding.
    """
    A = mapper.A if isinstance(mapper, BitMapper) else np.asarray(mapper, dtype=float)
    if A.shape[0] != instance.K:
        raise ValueError(f"mapper has {A.shape[0]} rows, code has {instance.K} VN classes")
    out = np.empty(A.shape, dtype=np.int64)
    for k, mk in enumerate(instance.class_counts):
        row = A[k] / A[k].sum()
        out[k] = largest_remainder(mk * row, int(mk))
    return out


def allocate(instance: CodeInstance, mapper, rng, counts=None) -> np.ndarray:
    """Channel index (0-based) of every VN, random within each class."""
    if counts is None:
        counts = allocation_counts(instance, mapper)
    M = counts.shape[1]
    channel = np.empty(instance.vn_count, dtype=np.int8)
    for k in range(instance.K):
        pattern = np.repeat(np.arange(M, dtype=np.int8), counts[k])
        channel[instance.class_members(k)] = rng.permutation(pattern)
    return channel


def transmit_discrete(channel: np.ndarray, probabilities, rng) -> np.ndarray:
    """Independent corruption with probability ``probabilities[channel[v]]``."""
    p = np.asarray(probabilities, dtype=float)
    return rng.random(len(channel)) < p[channel]


def transmit_awgn(channel: np.ndarray, M: int, rho_db: float, rng) -> np.ndarray:
    """Send the bits over BRGC 2^M-PAM + AWGN with minimum-distance detection.

    Bits on channel ``q`` fill label position ``q`` of the symbols in random
    order; short channels are padded with unobserved bits. A VN is flagged
    when its detected label bit differs from the sent one.
    """
    per = [np.flatnonzero(channel == q) for q in range(M)]
    S = max(len(v) for v in per)
    npts = 2**M
    sent = rng.integers(0, npts, S)
    if math.isinf(rho_db) and rho_db > 0:
        return np.zeros(len(channel), dtype=bool)
    sigma = math.sqrt(pam_energy(M) / db_to_linear(rho_db))
    y = 2 * sent - (npts - 1) + sigma * rng.standard_normal(S)
    detected = np.clip(np.rint((y + (npts - 1)) / 2), 0, npts - 1).astype(np.int64)
    gray = gray_labels(M)
    wrong = gray[sent] ^ gray[detected]
    flags = np.zeros(len(channel), dtype=bool)
    for q, vns in enumerate(per):
        slots = rng.permutation(S)[: len(vns)]
        flags[vns] = (wrong[slots] >> label_bit(M, q)) & 1
    return flags


@dataclass
class DecodeResult:
    residual: np.ndarray  # bool flags after the last pass
    counts: list[int]  # residual corrupted VNs after each pass
    class_counts: np.ndarray  # (passes, K)


def decode(instance: CodeInstance, flags, iterations: int) -> DecodeResult:
    """Iterative miscorrection-free BDD with a flooding schedule.

    In every pass each CN counts its corrupted VNs (from the previous
    pass) and clears all of them if the count is at most its capability.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != (instance.vn_count,):
        raise ValueError(f"expected {instance.vn_count} flags, got shape {flags.shape}")
    n, K = instance.cn_count, instance.K
    err = np.flatnonzero(flags)
    counts = []
    per_class = np.zeros((iterations, K), dtype=np.int64)
    for it in range(iterations):
        a, b = instance.cn_a[err], instance.cn_b[err]
        load = np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
        fixed = load <= instance.cn_capability
        keep = ~(fixed[a] | fixed[b])
        if keep.all():
            # nothing cleared: a fixed point for all remaining passes
            cc = np.bincount(instance.vn_class[err], minlength=K)
            counts.extend([len(err)] * (iterations - it))
            per_class[it:] = cc
            break
        err = err[keep]
        counts.append(len(err))
        per_class[it] = np.bincount(instance.vn_class[err], minlength=K)
    residual = np.zeros(instance.vn_count, dtype=bool)
    residual[err] = True
    return DecodeResult(residual, counts, per_class)


@dataclass(frozen=True)
class SimConfig:
    mode: Mode = Mode.AWGN_PAM
    M: int = 4
    iterations: int = 50
    target_errors: int = 200
    max_codewords: int = 100_000
    min_codewords: int = 1
    seed: int = 2016
    batch: int = 8
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_codewords < 1 or self.target_errors < 1 or self.batch < 1:
            raise ValueError("max_codewords, target_errors and batch must be >= 1")


@dataclass
class SimPoint:
    point: float
    ber: float
    ci95: float
    codewords: int
    errors: int
    elapsed: float

    def csv_row(self) -> str:
        return f"{self.point:.6g},{self.ber:.6e},{self.ci95:.6e},{self.codewords},{self.errors}"


CSV_HEADER = "point,ber,ci95,codewords,errors"


def trial_rng(seed: int, point_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point_index, trial)))


class _Trial:
    """Everything one codeword trial needs; shared with forked workers."""

    def __init__(self, instance, counts, config):
        self.instance = instance
        self.counts = counts
        self.config = config
        self.b = pam_b_factors(config.M)

    def run(self, point: float, rng) -> int:
        inst, cfg = self.instance, self.config
        channel = allocate(inst, None, rng, self.counts)
        if cfg.mode is Mode.AWGN_PAM:
            flags = transmit_awgn(channel, cfg.M, point, rng)
        else:
            flags = transmit_discrete(channel, point * self.b / inst.spec.n, rng)
        return decode(inst, flags, cfg.iterations).counts[-1]


_WORKER: _Trial | None = None


def _run_chunk(args):
    point, point_index, seed, trials = args
    return [_WORKER.run(point, trial_rng(seed, point_index, t)) for t in trials]


def simulate_ber(spec: CodeSpec, mapper, config: SimConfig, grid, instance=None, log=None) -> list[SimPoint]:
    """Estimate post-decoding BER at every grid point.

    Points are SNRs in dB for awgn-pam and average qualities ``c`` (with
    ``c_q = c b_q``) otherwise. Trials run in fixed batches and results
    are accumulated in trial order, so the output does not depend on
    ``threads``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    inst = instance or instantiate(spec)
    A = mapper.A if isinstance(mapper, BitMapper) else np.asarray(mapper, dtype=float)
    if A.shape[1] != config.M:
        raise ValueError(f"mapper has {A.shape[1]} columns, M = {config.M}")
    trial = _Trial(inst, allocation_counts(inst, A), config)
    global _WORKER
    _WORKER = trial
    pool = None
    if config.threads > 1:
        pool = multiprocessing.get_context("fork").Pool(config.threads)
    m = inst.vn_count
    out = []
    try:
        for pi, point in enumerate(grid):
            start = time.perf_counter()
            errors = words = 0
            next_trial = 0
            done = False
            while not done:
                ids = list(range(next_trial, min(next_trial + config.batch, config.max_codewords)))
                next_trial += len(ids)
                if pool is None:
                    results = _run_chunk((point, pi, config.seed, ids))
                else:
                    chunks = [(point, pi, config.seed, ids[k :: config.threads]) for k in range(config.threads)]
                    parts = pool.map(_run_chunk, chunks)
                    results = [None] * len(ids)
                    for k, part in enumerate(parts):
                        results[k :: config.threads] = part
                for r in results:
                    errors += r
                    words += 1
                    if words >= config.max_codewords or (
                        errors >= config.target_errors and words >= config.min_codewords
                    ):
                        done = True
                        break
            ber = errors / (m * words)
            ci = 1.96 * math.sqrt(max(ber * (1 - ber), 0.0) / (m * words))
            res = SimPoint(float(point), ber, ci, words, errors, time.perf_counter() - start)
            out.append(res)
            if log:
                log(res)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return out


def default_threads() -> int:
    return os.cpu_count() or 1
