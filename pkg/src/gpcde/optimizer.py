"""Bit-mapper design by differential evolution (rand/1/bin).

Candidates are raw nonnegative ``K x M`` matrices. Each one is projected
onto the valid set (row-stochastic, equal channel usage) by iterative
proportional fitting before its threshold is evaluated, so the objective
is always the plain decoding threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import de
from .bitmapper import STRICT, BitMapper, uniform_mapper, validate
from .gpc import CodeSpec, class_fractions

log = logging.getLogger(__name__)


class RepairError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    population_size: int = 30
    max_generations: int = 200
    F: float = 0.7
    CR: float = 0.9
    seed: int = 2016
    threshold_tol: float = 5e-3
    final_tol: float = 1e-3
    iterations: int = de.DEFAULT_ITERATIONS
    search_hi: float = de.DEFAULT_SEARCH_HI

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if not 0 < self.F <= 2:
            raise ValueError("F must lie in (0, 2]")
        if not 0 <= self.CR <= 1:
            raise ValueError("CR must lie in [0, 1]")


@dataclass
class OptimizeResult:
    mapper: BitMapper
    threshold: float
    uniform_threshold: float
    history: list[tuple[int, float]] = field(default_factory=list)


def repair(raw, fractions, tol: float = 1e-9, max_sweeps: int = 10_000) -> BitMapper:
    """Project a nonnegative matrix onto the valid mapper set.

    Negative entries are clipped and all-zero rows replaced by uniform
    rows; rows and weighted columns are then rescaled alternately until
    both constraint families hold to ``tol``.
    """
    A = np.clip(np.array(raw, dtype=float), 0.0, None)
    w = np.asarray(fractions, dtype=float)
    K, M = A.shape
    dead = A.sum(axis=1) <= 0
    A[dead] = 1.0 / M
    usage = w @ A
    if np.any(usage <= 0):
        raise RepairError(f"channels {np.flatnonzero(usage <= 0).tolist()} receive no bits")
    for _ in range(max_sweeps):
        A /= A.sum(axis=1, keepdims=True)
        A *= (1.0 / M) / (w @ A)
        if np.all(np.abs(A.sum(axis=1) - 1.0) <= tol):
            break
    else:
        raise RepairError(f"proportional fitting did not converge in {max_sweeps} sweeps")
    if validate(A, w, STRICT):
        raise RepairError("repaired matrix fails strict validation")
    return BitMapper(A, w, STRICT)


def _random_feasible(rng, K, M, w):
    for _ in range(100):
        try:
            return repair(rng.dirichlet(np.ones(M), size=K), w).A
        except RepairError:
            continue
    raise RepairError("could not draw a feasible random mapper")


def optimize(spec: CodeSpec, b, config: OptimizerConfig = OptimizerConfig(), progress=None) -> OptimizeResult:
    """Search for the mapper with the largest decoding threshold.

    Every candidate index owns its RNG stream, so the result depends only
    on ``config``. ``progress(generation, best)`` is called once per
    generation (generation 0 is the initial population).
    """
    b = np.asarray(b, dtype=float)
    w = class_fractions(spec)
    K, M = len(w), len(b)
    P = config.population_size

    def evaluate(mats, tol):
        return de.thresholds(spec, mats, b, config.search_hi, tol, config.iterations)

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(P)]
    pop = np.empty((P, K, M))
    pop[0] = uniform_mapper(K, M, w).A
    for i in range(1, P):
        pop[i] = _random_feasible(streams[i], K, M, w)
    fit = evaluate(pop, config.threshold_tol)
    history = [(0, float(fit.max()))]
    if progress:
        progress(0, float(fit.max()))

    for gen in range(1, config.max_generations + 1):
        trials, owners = [], []
        for i in range(P):
            rng = streams[i]
            r1, r2, r3 = rng.choice([j for j in range(P) if j != i], size=3, replace=False)
            mutant = pop[r1] + config.F * (pop[r2] - pop[r3])
            cross = rng.random((K, M)) < config.CR
            cross.flat[rng.integers(K * M)] = True
            try:
                trial = repair(np.where(cross, mutant, pop[i]), w)
            except RepairError:
                continue
            trials.append(trial.A)
            owners.append(i)
        if trials:
            tfit = evaluate(np.array(trials), config.threshold_tol)
            for i, A, f in zip(owners, trials, tfit):
                if f >= fit[i]:
                    pop[i], fit[i] = A, f
        best = float(fit.max())
        history.append((gen, best))
        if progress:
            progress(gen, best)
        log.debug("generation %d best %.4f", gen, best)

    best_A = pop[int(np.argmax(fit))]
    uni = uniform_mapper(K, M, w)
    fine_best, fine_uni = evaluate(np.array([best_A, uni.A]), config.final_tol)
    if fine_best < fine_uni:
        return OptimizeResult(uni, float(fine_uni), float(fine_uni), history)
    return OptimizeResult(BitMapper(best_A, w, STRICT), float(fine_best), float(fine_uni), history)
