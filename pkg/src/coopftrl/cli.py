"""Command line: ``run``, ``validate`` and ``verify``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .experiments import (
    load_config,
    preset,
    run_experiment,
    with_overrides,
)
from .simulator import ConfigError

EXIT_CONFIG = 2


def build_parser():
    ap = argparse.ArgumentParser(prog="coopftrl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a preset or a config file")
    r.add_argument("--preset", choices=["exp1", "exp2", "exp3", "exp4"])
    r.add_argument("--config", help="JSON config; its fields override the preset")
    r.add_argument("--out", help=f"output directory (default ${{COOPFTRL_OUT}} or ./results)")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int, dest="T")
    r.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", required=True)

    f = sub.add_parser("verify", help="run the oracle suite")
    f.add_argument("--out", default="oracle_report.csv")
    f.add_argument("--quick", action="store_true", help="a tenth of the instances")
    f.add_argument("--seed", type=int, default=0)
    return ap


def resolve_config(args):
    if args.preset is None and args.config is None:
        raise ConfigError("give --preset, --config or both")
    base = preset(args.preset) if args.preset else None
    cfg = load_config(args.config, base) if args.config else base
    cfg = with_overrides(cfg, runs=args.runs, seed=args.seed, T=args.T, out_dir=args.out)
    return cfg.validate()


def cmd_run(args):
    cfg = resolve_config(args)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    summary = run_experiment(cfg, jobs=args.jobs)
    for row in summary:
        print(",".join(str(x) for x in row))
    print(f"wrote {Path(cfg.out_dir) / cfg.name}", file=sys.stderr)
    return 0


def cmd_validate(args):
    cfg = load_config(args.config)
    cfg.validate()
    print(f"ok: {cfg.name}")
    return 0


def cmd_verify(args):
    from .oracles import run_suite

    reports = run_suite(quick=args.quick, seed=args.seed)
    rows = [r.row() for r in reports]
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    failed = [r for r in reports if not r.passed]
    by_check = {}
    for r in reports:
        n, bad = by_check.get(r.check, (0, 0))
        by_check[r.check] = (n + 1, bad + (not r.passed))
    for check, (n, bad) in by_check.items():
        print(f"{check}: {n - bad}/{n} passed")
    return 1 if failed else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
