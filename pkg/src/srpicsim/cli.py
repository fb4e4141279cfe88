"""Command line front end: run scenarios, sweep a parameter, compare arms.

Exit status 0 on success, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .scenario import (
    COMPARE_COLUMNS,
    ConfigError,
    compare,
    load_scenario,
    override_param,
    parse_csv,
    rows_to_csv,
    run_scenario,
)


def _fmt_value(v: float) -> str:
    return f"{v:.6g}"


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _apply_seed_count(cfg, seed_count: int | None):
    if seed_count is None:
        return cfg
    if seed_count < 1:
        raise ConfigError("--seed-count: must be >= 1")
    return replace(cfg, seeds=tuple(range(1, seed_count + 1)))


def cmd_run(args) -> int:
    cfg = _apply_seed_count(load_scenario(args.config), args.seed_count)
    rows = run_scenario(cfg)
    _write(rows_to_csv(rows), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_seed_count(load_scenario(args.config), args.seed_count)
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    if not values:
        raise ConfigError("--values: at least one value required")
    rows = []
    for value in values:
        point = override_param(cfg, args.param, value)
        point = replace(point, name=f"{cfg.name}[{args.param}={_fmt_value(value)}]")
        rows.extend(run_scenario(point))
    rows.sort(key=lambda r: (r["scenario"], r["seed"], r["stream_id"], r["srpic"]))
    _write(rows_to_csv(rows), args.out)
    return 0


def cmd_compare(args) -> int:
    try:
        with open(args.csv, "r", encoding="utf-8") as fh:
            rows = parse_csv(fh.read())
    except OSError as exc:
        raise ConfigError(f"{args.csv}: {exc}") from exc
    summary = compare(rows)
    _write(rows_to_csv(summary, COMPARE_COLUMNS), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srpicsim",
        description="Paired experiments for in-driver sorting of reordered TCP packets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file, emit per-run CSV")
    p_run.add_argument("config", help="scenario YAML file")
    p_run.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p_run.add_argument(
        "--seed-count",
        type=int,
        default=None,
        help="replace the config's seed list with seeds 1..N",
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across parameter values")
    p_sweep.add_argument("config", help="scenario YAML file")
    p_sweep.add_argument("--param", required=True, help="e.g. beta, delta, fwd.beta")
    p_sweep.add_argument(
        "--values", required=True, help="comma separated values, e.g. 0.002,0.01"
    )
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--seed-count", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="summarize a run CSV into paired statistics")
    p_cmp.add_argument("csv", help="CSV produced by 'run' or 'sweep'")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
