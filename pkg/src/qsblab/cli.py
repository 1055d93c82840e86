"""Command line front end.

Subcommands: construct, verify, threshold, properties, optimize, sweep.
Exit codes: 0 success, 1 usage, 2 mathematically impossible request,
3 I/O or malformed input, 4 invariant or property violation. Every run
writes a small manifest next to its outputs so it can be replayed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ChainNotApplicable, NoPerfectQsb, QsbError
from .hilbert import basis_state, random_pure
from .metrics import property_sweep
from .optimize import FrontierPoint, OptimizeConfig, SampleSpec, frontier_sweep, optimize_qsb
from .qsb import (
    QsbInstance,
    chain_verify,
    default_probe_states,
    epsilon_threshold,
    measure_eps,
    perfect_qsb_construct,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IMPOSSIBLE = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; reserve 2 for impossible requests
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _manifest_path(outputs: list[str], subcommand: str) -> Path:
    if outputs:
        p = Path(outputs[0])
        return p.with_name(p.stem + ".manifest.json")
    return Path(f"{subcommand}.manifest.json")


def _write_manifest(
    subcommand: str,
    args: argparse.Namespace,
    inputs: list[str],
    outputs: list[str],
    started: float,
) -> None:
    flags = {
        k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)
    }
    manifest = {
        "subcommand": subcommand,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    path = _manifest_path(outputs, subcommand)
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _print_wrapped(values, per_line: int = 8) -> None:
    for i in range(0, len(values), per_line):
        print(" ".join(f"{v:.6f}" for v in values[i : i + per_line]))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_construct(args) -> int:
    started = time.time()
    inst = perfect_qsb_construct(args.ds, args.da, args.db, args.dc)
    rng = np.random.default_rng(args.seed)
    states = [random_pure(inst.source_layout, rng) for _ in range(100)]
    _, pairs = measure_eps(inst, states)
    f_ab = min(p.f_ab for p in pairs)
    f_ac = min(p.f_ac for p in pairs)
    Path(args.out).write_text(json.dumps(inst.to_json(), indent=2) + "\n")
    print(f"wrote {args.out}")
    print(f"f_ab {f_ab:.6f}")
    print(f"f_ac {f_ac:.6f}")
    _write_manifest("construct", args, [], [args.out], started)
    return EXIT_OK


def _load_instance(path: str) -> QsbInstance:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _IoFailure(f"cannot read instance file {path}: {exc}") from exc
    try:
        return QsbInstance.from_json(data)
    except (KeyError, TypeError, IndexError) as exc:
        raise _IoFailure(f"instance file {path} is malformed: {exc}") from exc


class _IoFailure(Exception):
    pass


def _cmd_verify(args) -> int:
    started = time.time()
    inst = _load_instance(args.instance)
    probes = default_probe_states(inst.source_layout, args.seed, haar_count=args.samples)
    eps_hat, pairs = measure_eps(inst, probes)
    print(f"eps_hat {eps_hat:.6g}")
    print(f"states {len(pairs)}")
    _print_wrapped([p.worst for p in pairs])
    outputs: list[str] = []
    code = EXIT_OK
    if args.chain:
        basis = [basis_state(inst.source_layout, k) for k in range(inst.d_s)]
        report = chain_verify(
            inst, basis, eps_hat, seed=args.seed, allow_trivial=args.allow_trivial
        )
        print(f"chain eps_effective {report.eps:.6g}  d_a {report.d_a}")
        print(f"{'check':40s} {'value':>12s} {'bound':>12s} {'slack':>12s} status")
        for c in report.checks:
            status = "vacuous" if c.vacuous else ("ok" if c.satisfied else "FAIL")
            print(f"{c.label:40s} {c.lhs:12.6f} {c.rhs:12.6f} {c.slack:12.6f} {status}")
        print(f"all_satisfied {report.all_satisfied}")
        if report.cloning_contradiction:
            print("copy floors exceed the universal cloning ceiling: contradiction")
        if args.out:
            Path(args.out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
            outputs.append(args.out)
            print(f"wrote {args.out}")
        if not report.all_satisfied:
            code = EXIT_INVARIANT
    _write_manifest("verify", args, [args.instance], outputs, started)
    return code


def _cmd_threshold(args) -> int:
    started = time.time()
    eps_zero, fixed, dimensional = epsilon_threshold(args.da)
    print(f"eps_zero {eps_zero!r}")
    print(f"candidates fixed {fixed!r} dimensional {dimensional!r}")
    _write_manifest("threshold", args, [], [], started)
    return EXIT_OK


def _cmd_properties(args) -> int:
    started = time.time()
    failures = property_sweep(args.samples, args.dims, args.seed)
    _write_manifest("properties", args, [], [], started)
    if failures:
        print(f"{len(failures)} property violations (seed {args.seed}):")
        for c in failures:
            print(f"  {c.label}: lhs {c.lhs!r} rhs {c.rhs!r} slack {c.slack!r} seed {args.seed}")
        return EXIT_INVARIANT
    print(f"properties ok: {args.samples} samples per property, dims <= {args.dims}")
    return EXIT_OK


def _config_from_args(args) -> OptimizeConfig:
    return OptimizeConfig(
        d_s=args.ds,
        d_a=args.da,
        d_b=args.db,
        d_c=args.dc,
        env_dim=args.env,
        restarts=args.restarts,
        max_iters=args.iters,
        objective=args.objective,
        sample_spec=SampleSpec(haar_count=args.haar),
        seed=args.seed,
    )


def _cmd_optimize(args) -> int:
    started = time.time()
    point = optimize_qsb(_config_from_args(args))
    print(f"dims {point.dims}")
    print(f"best {point.best_worst_fidelity:.6f}")
    print(f"eps_hat {point.eps_hat:.6g}")
    print(f"winner restart {point.winner_restart} after {point.iterations_used} iters")
    Path(args.out).write_text(json.dumps(point.to_json(), indent=2) + "\n")
    print(f"wrote {args.out}")
    _write_manifest("optimize", args, [], [args.out], started)
    return EXIT_OK


def _parse_range(text: str) -> tuple[int, int]:
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
    else:
        lo_s = hi_s = text
    lo, hi = int(lo_s), int(hi_s)
    if lo < 1 or hi < lo:
        raise ValueError(f"bad range {text!r}")
    return lo, hi


def _cmd_sweep(args) -> int:
    started = time.time()
    try:
        lo, hi = _parse_range(args.da)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    base = OptimizeConfig(
        d_s=args.ds,
        d_a=max(lo, 1),
        d_b=args.db,
        d_c=args.dc,
        restarts=args.restarts,
        max_iters=args.iters,
        objective=args.objective,
        sample_spec=SampleSpec(haar_count=args.haar),
        seed=args.seed,
    )
    points = frontier_sweep(args.ds, range(lo, hi + 1), args.db, args.dc, base)
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FrontierPoint.CSV_HEADER)
        for p in points:
            writer.writerow(p.csv_row())
    for p in points:
        print(f"d_a {p.dims[1]}: best {p.best_worst_fidelity:.6f}")
    print(f"wrote {args.csv}")
    _write_manifest("sweep", args, [], [args.csv], started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------


def _add_opt_flags(p: _Parser) -> None:
    p.add_argument("--ds", type=int, required=True, help="source dimension")
    p.add_argument("--db", type=int, required=True, help="first private dimension")
    p.add_argument("--dc", type=int, required=True, help="second private dimension")
    p.add_argument("--env", type=int, default=None, help="environment dimension")
    p.add_argument("--restarts", type=int, default=16)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--haar", type=int, default=200, help="Haar probe count")
    p.add_argument(
        "--objective", choices=("worst_case", "average"), default="worst_case"
    )
    p.add_argument("--seed", type=int, default=42)


def build_parser() -> _Parser:
    parser = _Parser(prog="qsblab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qsblab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("construct", help="build the exact broadcast at d_S <= d_A")
    p.add_argument("--ds", type=int, required=True)
    p.add_argument("--da", type=int, required=True)
    p.add_argument("--db", type=int, required=True)
    p.add_argument("--dc", type=int, required=True)
    p.add_argument("-o", "--out", required=True, help="instance JSON path")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_construct)

    p = sub.add_parser("verify", help="measure the fidelity deficit of an instance")
    p.add_argument("instance", help="instance JSON path")
    p.add_argument("--samples", type=int, default=100, help="Haar probe count")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--chain", action="store_true", help="run the deficit-bound chain")
    p.add_argument(
        "--allow-trivial",
        action="store_true",
        help="run the chain even at d_S <= d_A (its guarantees do not apply)",
    )
    p.add_argument("-o", "--out", default=None, help="chain report JSON path")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("threshold", help="deficit threshold for a shared dimension")
    p.add_argument("--da", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("properties", help="randomized fidelity-inequality sweep")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--dims", type=int, default=8, help="dimension cap per factor")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_properties)

    p = sub.add_parser("optimize", help="search for the best instance at fixed dims")
    _add_opt_flags(p)
    p.add_argument("--da", type=int, required=True)
    p.add_argument("-o", "--out", default="frontier.json")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("sweep", help="optimize across a range of shared dimensions")
    _add_opt_flags(p)
    p.add_argument("--da", required=True, help="shared-dimension range, e.g. 1..3")
    p.add_argument("--csv", default="sweep.csv", help="output CSV path")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (NoPerfectQsb, ChainNotApplicable) as exc:
        print(f"impossible: {exc}", file=sys.stderr)
        return EXIT_IMPOSSIBLE
    except _IoFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except QsbError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
