"""Command-line interface: ``gpcde <subcommand> ...``.

Data goes to stdout (or ``--out``), diagnostics to stderr. Exit status is
0 on success, 1 on validation or computation failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, de
from .bitmapper import LOOSE, BitMapper, MapperError, load_matrix, save_mapper, uniform_mapper, validate
from .channel import pam_b_factors, quality_from_snr, snr_from_quality
from .gpc import CodeSpecError, capability_counts, class_fractions, cn_degree, code_length, enumerate_vn_classes, load_code_spec
from .optimizer import OptimizerConfig, RepairError, optimize
from .simulator import CSV_HEADER, SimConfig, default_threads, simulate_ber

DEFAULT_SEED = 2016

log = logging.getLogger("gpcde")


class Failure(Exception):
    """Reported on stderr with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: usage error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Configuration record written next to every CSV output."""

    def __init__(self, subcommand: str, config: dict, seed=None):
        self.doc = {
            "subcommand": subcommand,
            "config": config,
            "seed": seed,
            "version": __version__,
            "started": _now(),
        }

    def finish(self, path: str | None, **extra):
        self.doc["stopped"] = _now()
        self.doc.update(extra)
        text = json.dumps(self.doc, indent=2, default=str)
        if path:
            Path(path).write_text(text + "\n")
        else:
            print(text, file=sys.stderr)


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _manifest_path(args) -> str | None:
    if getattr(args, "manifest", None):
        return args.manifest
    if getattr(args, "out", None):
        return args.out + ".manifest.json"
    return None


def _emit(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_code(path):
    try:
        return load_code_spec(path)
    except FileNotFoundError as exc:
        raise Failure(f"gpc: cannot read code file {path}") from exc
    except CodeSpecError as exc:
        raise Failure(f"gpc: invalid code spec: {exc}") from exc


def _load_mapper(arg, spec, M) -> BitMapper:
    w = class_fractions(spec)
    if arg == "uniform":
        return uniform_mapper(len(w), M, w)
    try:
        A = load_matrix(arg)
    except FileNotFoundError as exc:
        raise Failure(f"bitmapper: cannot read mapper file {arg}") from exc
    except MapperError as exc:
        raise Failure(f"bitmapper: {exc}") from exc
    if A.shape != (len(w), M):
        raise Failure(f"bitmapper: matrix is {A.shape[0]}x{A.shape[1]}, expected {len(w)}x{M}")
    try:
        return BitMapper(A, w, LOOSE)
    except MapperError as exc:
        raise Failure(f"bitmapper: {exc}") from exc


def _code_args(p, mapper=True):
    p.add_argument("--code", required=True, help="code spec JSON")
    if mapper:
        p.add_argument("--mapper", default="uniform", help="mapper JSON or 'uniform'")
    p.add_argument("--M", type=int, required=True, help="bits per PAM symbol")


def _de_args(p):
    p.add_argument("--iterations", type=int, default=de.DEFAULT_ITERATIONS,
                   help="DE iteration budget (decoder iterations)")
    p.add_argument("--eps", type=float, default=de.DEFAULT_EPS)


def cmd_threshold(args):
    spec = _load_code(args.code)
    mapper = _load_mapper(args.mapper, spec, args.M)
    try:
        c = de.threshold(spec, mapper, pam_b_factors(args.M), args.search_hi, args.tol,
                         args.iterations, args.eps)
    except de.BracketError as exc:
        raise Failure(f"de: bracket failure: {exc}") from exc
    print(f"{c:.4f}")


def cmd_de_trace(args):
    spec = _load_code(args.code)
    mapper = _load_mapper(args.mapper, spec, args.M)
    problem = de.DeProblem.from_mapper(spec, mapper, args.c * pam_b_factors(args.M))
    rows = ["iteration,class,x"]
    for st in de.de_trace(problem, args.iters):
        for cls, x in zip(st.classes, st.x):
            rows.append(f"{st.iteration},{cls.position}:{cls.capability},{x:.12e}")
    manifest = RunManifest("de-trace", _config(args))
    _emit(args, "\n".join(rows) + "\n")
    manifest.finish(_manifest_path(args))


def cmd_optimize(args):
    spec = _load_code(args.code)
    cfg = OptimizerConfig(population_size=args.pop, max_generations=args.gens, F=args.F,
                          CR=args.CR, seed=args.seed, iterations=args.iterations)
    manifest = RunManifest("optimize", _config(args), args.seed)
    progress = ["generation,best_threshold"]
    try:
        res = optimize(spec, pam_b_factors(args.M), cfg,
                       progress=lambda g, best: progress.append(f"{g},{best:.6f}"))
    except RepairError as exc:
        raise Failure(f"optimizer: repair failure: {exc}") from exc
    save_mapper(res.mapper, args.out)
    Path(args.progress or args.out + ".progress.csv").write_text("\n".join(progress) + "\n")
    print(f"{res.threshold:.4f}")
    manifest.finish(_manifest_path(args), threshold=res.threshold,
                    uniform_threshold=res.uniform_threshold)


def _parse_grid(text: str):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise Failure(f"simulator: grid must be start:stop:step, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise Failure("simulator: grid needs step > 0 and stop >= start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def cmd_simulate(args):
    spec = _load_code(args.code)
    mapper = _load_mapper(args.mapper, spec, args.M)
    cfg = SimConfig(mode=args.mode, M=args.M, iterations=args.iters, target_errors=args.target_errors,
                    max_codewords=args.max_codewords, min_codewords=args.min_codewords,
                    seed=args.seed, threads=args.threads or default_threads())
    grid = _parse_grid(args.grid)
    manifest = RunManifest("simulate", _config(args), args.seed)
    timings = []

    def report(p):
        timings.append({"point": p.point, "elapsed_seconds": round(p.elapsed, 3)})
        log.info("point %g: ber %.3e after %d codewords", p.point, p.ber, p.codewords)

    points = simulate_ber(spec, mapper, cfg, grid, log=report)
    _emit(args, "\n".join([CSV_HEADER] + [p.csv_row() for p in points]) + "\n")
    manifest.finish(_manifest_path(args), timings=timings)


def cmd_snr(args):
    if (args.c is None) == (args.rho_db is None):
        raise SystemExit(_usage("snr needs exactly one of --c or --rho-db"))
    try:
        if args.c is not None:
            print(f"{snr_from_quality(args.M, args.c, args.n):.4f}")
        else:
            print(f"{quality_from_snr(args.M, args.rho_db, args.n):.6f}")
    except ValueError as exc:
        raise Failure(f"channel: {exc}") from exc


def cmd_validate_mapper(args):
    spec = _load_code(args.code)
    w = class_fractions(spec)
    try:
        A = load_matrix(args.mapper)
        violations = validate(A, w, LOOSE)
    except FileNotFoundError as exc:
        raise Failure(f"bitmapper: cannot read mapper file {args.mapper}") from exc
    except MapperError as exc:
        raise Failure(f"bitmapper: {exc}") from exc
    if violations:
        for v in violations:
            print(f"bitmapper: {v}", file=sys.stderr)
        return 1
    print(f"bitmapper: valid {A.shape[0]}x{A.shape[1]} mapper", file=sys.stderr)
    return 0


def describe(spec) -> dict:
    classes = enumerate_vn_classes(spec)
    return {
        "n": spec.n,
        "L": spec.L,
        "d": spec.d,
        "m": code_length(spec),
        "K": len(classes),
        "cn_degrees": [cn_degree(spec, i) for i in range(spec.L)],
        "capability_counts": [[list(p) for p in capability_counts(spec, i)] for i in range(spec.L)],
        "vn_classes": [
            {"k": c.index, "block": [c.i, c.j], "capabilities": [c.t, c.t2],
             "count": c.count, "fraction": c.fraction}
            for c in classes
        ],
    }


def cmd_describe_code(args):
    spec = _load_code(args.code)
    print(json.dumps(describe(spec), indent=2))


def _usage(msg):
    print(f"gpcde: usage error: {msg}", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpcde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gpcde {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("threshold", help="DE decoding threshold of a mapper")
    _code_args(s)
    _de_args(s)
    s.add_argument("--tol", type=float, default=de.DEFAULT_TOL)
    s.add_argument("--search-hi", type=float, default=de.DEFAULT_SEARCH_HI)
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("de-trace", help="CSV of DE parameters per iteration")
    _code_args(s)
    s.add_argument("--c", type=float, required=True, help="average effective quality")
    s.add_argument("--iters", type=int, default=de.DEFAULT_ITERATIONS)
    s.add_argument("--out")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_de_trace)

    s = sub.add_parser("optimize", help="differential-evolution mapper search")
    _code_args(s, mapper=False)
    s.add_argument("--pop", type=int, default=30)
    s.add_argument("--gens", type=int, default=200)
    s.add_argument("--F", type=float, default=0.7)
    s.add_argument("--CR", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--iterations", type=int, default=de.DEFAULT_ITERATIONS)
    s.add_argument("--threads", type=int, default=None, help="accepted for symmetry; search is vectorized")
    s.add_argument("--out", default="mapper.json", help="best mapper JSON")
    s.add_argument("--progress", help="progress CSV (default: <out>.progress.csv)")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", help="Monte Carlo BER simulation")
    _code_args(s)
    s.add_argument("--mode", choices=["awgn-pam", "genie-bsc", "bec"], default="awgn-pam")
    s.add_argument("--grid", required=True, help="start:stop:step (dB for awgn-pam, else c)")
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--target-errors", type=int, default=200)
    s.add_argument("--max-codewords", type=int, default=100_000)
    s.add_argument("--min-codewords", type=int, default=1)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    s.add_argument("--out")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("snr", help="convert between quality c and SNR in dB")
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--c", type=float)
    s.add_argument("--rho-db", type=float)
    s.set_defaults(func=cmd_snr)

    s = sub.add_parser("validate-mapper", help="check a mapper against a code")
    s.add_argument("--code", required=True)
    s.add_argument("--mapper", required=True)
    s.set_defaults(func=cmd_validate_mapper)

    s = sub.add_parser("describe-code", help="combinatorics of a code spec as JSON")
    s.add_argument("--code", required=True)
    s.set_defaults(func=cmd_describe_code)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        status = args.func(args)
    except Failure as exc:
        print(exc, file=sys.stderr)
        return 1
    return int(status or 0)


def dispatch(argv) -> int:
    """Run one subcommand and return its exit status (usage errors give 2)."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
