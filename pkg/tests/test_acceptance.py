"""Acceptance criteria; each test records one PASS/FAIL line in the session summary."""

import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import A_STAR, ACCEPTANCE_LINES, CONFIGS
from gpcde.bitmapper import mix, uniform_mapper
from gpcde.channel import pam_b_factors, snr_from_quality
from gpcde.cli import describe, dispatch
from gpcde.de import DeProblem, Outcome, de_run, de_trace, poisson_tail, threshold
from gpcde.gpc import CodeSpec, enumerate_vn_classes, hpc, product_code
from gpcde.optimizer import OptimizerConfig, optimize
from gpcde.simulator import CodeInstance, SimConfig, decode, instantiate, simulate_ber
from test_simulator import naive_decode
from trajectory import compare

HPC = str(CONFIGS / "hpc_n1600.json")
ASTAR = str(CONFIGS / "a_star.json")
B4 = pam_b_factors(4)


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def cli_value(capsys, *argv):
    start = time.perf_counter()
    status = dispatch(list(argv))
    out = capsys.readouterr().out
    assert status == 0
    return float(out), time.perf_counter() - start


def test_1_combinatorics(ref_spec):
    start = time.perf_counter()
    doc = describe(ref_spec)
    elapsed = time.perf_counter() - start
    counts = [c["count"] for c in doc["vn_classes"]]
    ok = (
        doc["m"] == 1_279_200
        and counts == [568711, 568711, 141778]
        and doc["capability_counts"] == [[[5, 1067], [8, 533]]]
        and doc["K"] == 3
        and elapsed < 1
    )
    record("1 combinatorics", ok, f"m={doc['m']} m_k={counts} caps={doc['capability_counts'][0]} "
           f"K={doc['K']} ({elapsed:.3f}s)")
    assert ok


def test_2_uniform_threshold(capsys):
    c, elapsed = cli_value(capsys, "threshold", "--code", HPC, "--mapper", "uniform", "--M", "4")
    ok = abs(c - 10.13) <= 0.02 and elapsed < 10
    record("2 uniform threshold", ok, f"{c:.4f} (target 10.13 +- 0.02, {elapsed:.2f}s)")
    assert ok


def test_3_optimized_threshold(capsys):
    c, elapsed = cli_value(capsys, "threshold", "--code", HPC, "--mapper", ASTAR, "--M", "4")
    ok = abs(c - 10.63) <= 0.02 and elapsed < 10
    record("3 A* threshold", ok, f"{c:.4f} (target 10.63 +- 0.02, {elapsed:.2f}s)")
    assert ok


def test_4_snr(capsys):
    rho, elapsed = cli_value(capsys, "snr", "--M", "4", "--c", "10.63", "--n", "1600")
    ok = abs(rho - 26.11) <= 0.01 and elapsed < 1
    record("4 snr conversion", ok, f"{rho:.4f} dB (target 26.11 +- 0.01, {elapsed:.3f}s)")
    assert ok


@pytest.mark.slow
def test_5_optimizer_quality(ref_spec):
    start = time.perf_counter()
    found = {seed: optimize(ref_spec, B4, OptimizerConfig(seed=seed)).threshold for seed in (1, 2, 3)}
    elapsed = time.perf_counter() - start
    best = max(found.values())
    ok = best >= 10.55 and elapsed < 1800
    detail = ", ".join(f"seed {s}: {c:.4f}" for s, c in found.items())
    record("5 optimizer quality", ok, f"best {best:.4f} >= 10.55 ({detail}; {elapsed:.0f}s)")
    assert ok


def _first_crossing(points, level):
    """SNR where the log-BER curve first drops below ``level`` (linear in log10)."""
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if y0 > level >= y1:
            l0, l1, ll = math.log10(y0), math.log10(y1), math.log10(level)
            return x0 + (x1 - x0) * (l0 - ll) / (l0 - l1)
    return None


def _waterfall(spec, inst, mapper, start):
    """Simulate from ``start`` in 0.02 dB steps until BER falls below 1e-4."""
    cfg = SimConfig(mode="awgn-pam", M=4, iterations=50, target_errors=60_000,
                    min_codewords=20, max_codewords=800, seed=2016)
    m = inst.vn_count
    curve = []

    def point(rho):
        (p,) = simulate_ber(spec, mapper, cfg, [rho], instance=inst)
        return (rho, max(p.ber, 0.5 / (m * p.codewords)))

    rho = start
    curve.append(point(rho))
    while curve[0][1] <= 1e-3:
        rho = round(curve[0][0] - 0.02, 4)
        curve.insert(0, point(rho))
    rho = curve[-1][0]
    while curve[-1][1] >= 1e-4:
        rho = round(rho + 0.02, 4)
        curve.append(point(rho))
    return curve


@pytest.mark.slow
def test_6_density_evolution_vs_simulation(ref_spec, ref_instance):
    start = time.perf_counter()
    results = {}
    for name, A in (("uniform", uniform_mapper(3, 4).A), ("A*", A_STAR)):
        c = threshold(ref_spec, A, B4)
        predicted = snr_from_quality(4, c, ref_spec.n)
        curve = _waterfall(ref_spec, ref_instance, A, round(predicted - 0.1, 2))
        results[name] = (predicted, _first_crossing(curve, 1e-3), _first_crossing(curve, 1e-4), curve)
    elapsed = time.perf_counter() - start
    ok = True
    parts = []
    for name, (pred, x3, x4, curve) in results.items():
        ok &= abs(x3 - pred) <= 0.2
        parts.append(f"{name}: 1e-3 at {x3:.3f} dB vs predicted {pred:.3f}")
        print(name, [(r, f"{b:.2e}") for r, b in curve])
    gap4 = results["uniform"][2] - results["A*"][2]
    ok &= results["A*"][1] < results["uniform"][1] and gap4 >= 0.03 and elapsed <= 7200
    record("6 DE vs simulation", ok, "; ".join(parts) + f"; gap at 1e-4 {gap4:.3f} dB ({elapsed:.0f}s)")
    assert ok


def _random_spec(rng):
    L = int(rng.integers(1, 4))
    d = int(rng.integers(2, 13))
    upper = np.triu(rng.integers(0, 2, (L, L)))
    eta = upper | upper.T
    for i in range(L):
        if not eta[i].any():
            eta[i, i] = 1
    t_max = int(rng.integers(1, 5))
    tau = rng.dirichlet(np.ones(t_max), size=L)
    return CodeSpec(n=L * d, eta=eta.tolist(), tau=tau.tolist())


def test_7a_poisson_tail_closed_forms():
    checks = [
        (poisson_tail(1, 1.0), 1 - math.exp(-1)),
        (poisson_tail(2, 2.0), 1 - 3 * math.exp(-2)),
        (poisson_tail(3, 0.0), 0.0),
        (poisson_tail(0, 5.0), 1.0),
        (poisson_tail(5, 10.0), 0.9707473119230389),
        (poisson_tail(8, 10.0), 0.7797793533983011),
    ]
    worst = max(abs(a - b) for a, b in checks)
    ok = worst <= 1e-12
    record("7a poisson tail", ok, f"max closed-form error {worst:.1e} <= 1e-12")
    assert ok


def test_7b_de_monotonicity():
    rng = np.random.default_rng(7)
    bad_l = bad_c = 0
    for _ in range(100):
        spec = _random_spec(rng)
        K = len(enumerate_vn_classes(spec))
        q = rng.uniform(0, 20, K)
        lower = q * rng.random(K)
        hi = np.array([s.x for s in de_trace(DeProblem.from_class_qualities(spec, q), 25)])
        lo = np.array([s.x for s in de_trace(DeProblem.from_class_qualities(spec, lower), 25)])
        bad_l += int(np.any(np.diff(hi, axis=0) > 1e-15))
        bad_c += int(np.any(lo > hi + 1e-15))
    ok = bad_l == 0 and bad_c == 0
    record("7b DE monotonicity", ok, f"100 random codes: {bad_l} violations in l, {bad_c} in c")
    assert ok


def test_7c_down_closed():
    rng = np.random.default_rng(8)
    spots = bad = 0
    while spots < 50:
        spec = _random_spec(rng)
        K = len(enumerate_vn_classes(spec))
        q = rng.uniform(0, 12, K)
        if de_run(DeProblem.from_class_qualities(spec, q), 500)[1] is not Outcome.SUCCESS:
            continue
        spots += 1
        lower = q * rng.random(K)
        bad += de_run(DeProblem.from_class_qualities(spec, lower), 500)[1] is not Outcome.SUCCESS
    ok = bad == 0
    record("7c admissibility down-closed", ok, f"{bad} failures in {spots} spot checks")
    assert ok


def test_7d_mix_linearity():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(200):
        K, M = rng.integers(1, 6), rng.integers(1, 6)
        A = rng.dirichlet(np.ones(M), size=K)
        w = rng.dirichlet(np.ones(K))
        A = A / (w @ A) / M
        A /= A.sum(axis=1, keepdims=True)
        x, y = rng.uniform(0, 20, M), rng.uniform(0, 20, M)
        a, b = rng.uniform(-3, 3, 2)
        worst = max(worst, np.abs(mix(A, a * x + b * y) - a * mix(A, x) - b * mix(A, y)).max())
        # exactly column-balanced matrix: the weighted mean is the channel mean
        u = np.full((K, M), 1.0 / M)
        worst = max(worst, abs(w @ mix(u, x) - x.mean()))
    ok = worst <= 1e-9
    record("7d mix linearity / weighted mean", ok, f"max deviation {worst:.1e}")
    assert ok


def test_7e_decoder_against_oracle():
    rng = np.random.default_rng(10)
    specs = [hpc(4, {1: 1.0}), hpc(8, {1: 0.5, 2: 0.5}), product_code(16, {1: 0.5, 2: 0.5}, {1: 0.25, 2: 0.75})]
    cases = mismatches = nonmono = 0
    for spec in specs:
        inst = instantiate(spec)
        patterns = (
            [np.array(b, bool) for b in itertools.product([0, 1], repeat=inst.vn_count)]
            if inst.vn_count <= 12
            else [rng.random(inst.vn_count) < rng.uniform(0.05, 0.6) for _ in range(300)]
        )
        for flags in patterns:
            res = decode(inst, flags, 6)
            ref, hist = naive_decode(inst.cn_a, inst.cn_b, inst.cn_capability, flags, 6)
            cases += 1
            mismatches += int(not np.array_equal(res.residual, ref) or res.counts != hist)
            nonmono += int(any(b > a for a, b in zip([int(flags.sum())] + hist, hist)))
            # relabel CNs and VNs at random and decode again
            cp, vp = rng.permutation(inst.cn_count), rng.permutation(inst.vn_count)
            caps = np.empty_like(inst.cn_capability)
            caps[cp] = inst.cn_capability
            moved = CodeInstance.from_arrays(spec, cp[inst.cn_a[vp]], cp[inst.cn_b[vp]], caps, inst.vn_class[vp])
            mismatches += int(not np.array_equal(decode(moved, flags[vp], 6).residual, res.residual[vp]))
    ok = mismatches == 0 and nonmono == 0
    record("7e decoder oracle / monotone / relabeling", ok,
           f"{cases} patterns (d <= 8), {mismatches} mismatches, {nonmono} non-monotone")
    assert ok


@pytest.mark.xfail(strict=True, reason="codeword-level correlation makes class residuals overdispersed "
                                       "relative to the binomial standard error; see the trajectory check below")
def test_7f_de_trajectory_binomial(ref_instance):
    worst = {}
    for name, A in (("uniform", uniform_mapper(3, 4).A), ("A*", A_STAR)):
        pred, emp, se_bin, _ = compare(ref_instance, A, 10.0, B4, codewords=20)
        worst[name] = float(np.abs((emp - pred) / se_bin).max())
    ok = all(z <= 3 for z in worst.values())
    record("7f DE trajectory (binomial SE)", ok,
           "max |z| over l<=5, c=10, 20 codewords: " + ", ".join(f"{k} {v:.1f}" for k, v in worst.items()))
    assert ok


def test_7g_de_trajectory_codeword_se(ref_instance):
    worst = {}
    for name, A in (("uniform", uniform_mapper(3, 4).A), ("A*", A_STAR)):
        pred, emp, _, se_emp = compare(ref_instance, A, 10.0, B4, codewords=100)
        worst[name] = float(np.abs((emp - pred) / se_emp).max())
    ok = all(z <= 3 for z in worst.values())
    record("7g DE trajectory (codeword-level SE)", ok,
           "max |z| over l<=5, c=10, 100 codewords: " + ", ".join(f"{k} {v:.1f}" for k, v in worst.items()))
    assert ok


def test_8_determinism(capsys, tmp_path):
    code = tmp_path / "code.json"
    code.write_text(json.dumps({"n": 80, "eta": [[1]], "tau": [[{"t": 2, "fraction": 0.5}, {"t": 3, "fraction": 0.5}]]}))
    runs = {
        "simulate": ["simulate", "--code", str(code), "--M", "4", "--mode", "genie-bsc", "--grid", "6:14:2",
                     "--target-errors", "100", "--max-codewords", "50", "--seed", "77", "--threads", "1"],
        "simulate-awgn": ["simulate", "--code", HPC, "--M", "4", "--grid", "26.0:26.2:0.1",
                          "--max-codewords", "3", "--seed", "5", "--threads", "1"],
        "optimize": ["optimize", "--code", str(code), "--M", "4", "--pop", "8", "--gens", "3", "--seed", "77"],
        "de-trace": ["de-trace", "--code", HPC, "--M", "4", "--c", "10.3", "--iters", "20"],
    }
    same = {}
    for name, argv in runs.items():
        blobs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}.csv" if name != "optimize" else tmp_path / f"{name}{k}.json"
            assert dispatch(argv + ["--out", str(out)]) == 0
            tracked = [out] if name != "optimize" else [out, tmp_path / f"{name}{k}.json.progress.csv"]
            blobs.append(b"".join(p.read_bytes() for p in tracked))
        capsys.readouterr()
        same[name] = blobs[0] == blobs[1]
    ok = all(same.values())
    record("8 determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok
