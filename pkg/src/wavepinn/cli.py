"""Command line: ``wavepinn {fig1,param-study,bench,train,certify} --config FILE``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from .experiments import (
    ConfigError,
    ExperimentConfig,
    NumericalFailure,
    run_bench,
    run_certify,
    run_fig1,
    run_param_study,
    run_train,
)
from .training import NonFiniteLoss

log = logging.getLogger("wavepinn")

COMMANDS = {
    "fig1": "errors and bounds over the level for the periodic Poisson problem",
    "param-study": "per-parameter errors and bounds of parametric networks",
    "bench": "timing of single loss evaluations per level",
    "train": "train one loss and store the parameters",
    "certify": "error bounds (and true errors when known) for a stored model",
}


def _csv_ints(s: str) -> list[int]:
    try:
        return [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavepinn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="YAML experiment config")
        s.add_argument("--out", type=Path, default=Path("."), help="output directory")
        s.add_argument("--level", type=int, help="override the level J")
        s.add_argument("--seeds", type=_csv_ints, help="comma-separated seeds, e.g. 0,1,2")
        s.add_argument("--threads", type=int, help="torch intra-op threads")
        s.add_argument("--gnuplot", action="store_true", help="also write a .gp script next to table outputs")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "certify":
            s.add_argument("--model", help="parameter file (default: <out>/model.wnet)")
        if name == "bench":
            s.add_argument("--levels", type=_csv_ints, help="comma-separated levels")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        over = {}
        if args.seeds:
            over["seeds"] = args.seeds
        if args.gnuplot:
            over["gnuplot"] = True
        if args.level is not None and args.command == "fig1":
            over["levels"] = [args.level]
        cfg = cfg.override(**over)
        if args.threads:
            torch.set_num_threads(args.threads)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "fig1":
            path = run_fig1(cfg, args.out)
        elif args.command == "param-study":
            path = run_param_study(cfg, args.out, args.level)
        elif args.command == "bench":
            levels = args.levels or ([args.level] if args.level is not None else None)
            path = run_bench(cfg, args.out, levels)
        elif args.command == "train":
            path = run_train(cfg, args.out, args.level)
        else:
            path = run_certify(cfg, args.out, args.level, args.model)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, NonFiniteLoss, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
