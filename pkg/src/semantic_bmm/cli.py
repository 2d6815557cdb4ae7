"""Command-line entry point: ``simulate``, ``benchmark`` and ``verify``.

Exit codes: 0 success, 1 usage or I/O error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .scenarios import ScenarioConfig, run_benchmark, run_scenario, write_outputs
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for failed verification
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semantic-bmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a toy or driving scenario")
    sim.add_argument("--config", required=True, type=Path, help="scenario JSON")
    sim.add_argument("--out", type=Path, help="output directory (overrides config out_dir)")

    bench = sub.add_parser("benchmark", help="time single property updates against J")
    bench.add_argument("--j", type=_int_list, default=[1, 2, 5, 10, 20])
    bench.add_argument("--reps", type=int, default=100_000)
    bench.add_argument("--k", type=int, default=10, help="number of classes")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", type=Path, help="CSV path for (J, mean_ns, std_ns)")

    ver = sub.add_parser("verify", help="check closed forms against numerical references")
    ver.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    ver.add_argument("--seed", type=int, default=0)
    return parser


def _simulate(args) -> int:
    try:
        cfg = ScenarioConfig.from_json_file(args.config)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: cannot load config {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out or cfg.out_dir
    if out_dir is None:
        print("error: no output directory (use --out or out_dir in the config)", file=sys.stderr)
        return EXIT_USAGE
    res = run_scenario(cfg)
    try:
        paths = write_outputs(res, out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for cp in res.checkpoints:
        print(json.dumps(cp, sort_keys=True))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _benchmark(args) -> int:
    try:
        rows, (intercept, slope, r2) = run_benchmark(args.j, K=args.k, n_reps=args.reps, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("J,mean_ns,std_ns")
    for J, mean, std in rows:
        print(f"{J},{mean:.1f},{std:.1f}")
    print(f"affine fit: {intercept:.1f} ns + {slope:.1f} ns/J, R^2 = {r2:.4f}")
    if args.out is not None:
        try:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            with args.out.open("w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["J", "mean_ns", "std_ns"])
                wr.writerows(rows)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    return EXIT_OK


def _verify(args) -> int:
    checks = run_suite(args.suite, seed=args.seed)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": _simulate, "benchmark": _benchmark, "verify": _verify}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
