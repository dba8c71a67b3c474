"""Command-line entry point.

Verbs mirror the pipeline stages (``ingest``, ``simulate``, ``metrics``,
``features``, ``select``, ``irf``, ``report``) plus ``all``.  Exit codes:
0 success, 1 configuration error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from holdsim.config import RunConfig
from holdsim.pipeline import STAGES, StageError, run_pipeline, run_stage

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2

log = logging.getLogger(__name__)


def _parse_interval(text: str) -> list[int]:
    try:
        lo, hi = text.split("-")
        return [int(lo), int(hi)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"interval must look like '731-1095', got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holdsim",
        description="Buy-hold-sell Monte Carlo simulation and macro-driver analysis.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="run.json", help="run configuration JSON")
        p.add_argument("--output", default=None, help="override output directory")
        p.add_argument("--force", action="store_true", help="rerun even if inputs are unchanged")

    for verb in STAGES + ["all"]:
        p = sub.add_parser(verb, help=f"run the {verb} stage" if verb != "all" else "run every stage")
        common(p)
        if verb in ("simulate", "all"):
            p.add_argument("--workers", type=int, default=None)
        if verb == "simulate":
            p.add_argument("--basket", default=None, help="restrict to one basket")
            p.add_argument("--interval", type=_parse_interval, default=None,
                           help="restrict to one interval, e.g. 731-1095")
            p.add_argument("--n", type=int, default=None, help="episodes per interval")
            p.add_argument("--fee", type=float, default=None)
            p.add_argument("--seed", type=int, default=None)
        if verb == "select":
            p.add_argument("--tensor", default=None, help="feature tensor directory")
            p.add_argument("--bootstrap", type=int, default=None, help="bootstrap draws")
            p.add_argument("--seed", type=int, default=None)
        if verb == "irf":
            p.add_argument("--tensor", default=None, help="feature tensor directory")
            p.add_argument("--features", default=None, help="selected-features JSON path")
            p.add_argument("--bootstrap", type=int, default=None, help="bootstrap replicates")
            p.add_argument("--lambda", dest="lam", type=float, default=None,
                           help="smoothing penalty weight")
            p.add_argument("--seed", type=int, default=None)
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    path = Path(args.config)
    if path.exists():
        cfg = RunConfig.from_json(path)
    elif args.config == "run.json":
        cfg = RunConfig()
    else:
        raise ValueError(f"config file not found: {args.config}")
    if args.output:
        cfg.output_dir = args.output

    verb = args.command
    if verb == "simulate":
        if args.basket is not None:
            if args.basket not in cfg.baskets:
                raise ValueError(f"unknown basket {args.basket!r}")
            cfg.baskets = {args.basket: cfg.baskets[args.basket]}
            if cfg.econ_basket not in cfg.baskets:
                cfg.econ_basket = args.basket
        if args.interval is not None:
            cfg.intervals = [args.interval]
        if args.n is not None:
            cfg.n_per_interval = args.n
        if args.fee is not None:
            cfg.fee = args.fee
        if args.seed is not None:
            cfg.seed_simulate = args.seed
    if verb == "select":
        if args.bootstrap is not None:
            cfg.bootstrap_select = args.bootstrap
        if args.seed is not None:
            cfg.seed_select = args.seed
    if verb == "irf":
        if args.bootstrap is not None:
            cfg.bootstrap_irf = args.bootstrap
        if args.lam is not None:
            cfg.lambda_rw1 = args.lam
        if args.seed is not None:
            cfg.seed_irf = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(args)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "all":
            ran = run_pipeline(cfg, force=args.force)
            for stage, did in ran.items():
                print(f"{stage}: {'ran' if did else 'skipped (up to date)'}")
        elif args.command == "select":
            from holdsim.pipeline import stage_select

            if args.tensor:
                stage_select(cfg, tensor_dir=args.tensor)
                print("select: ran")
            else:
                did = run_stage(cfg, "select", force=args.force)
                print(f"select: {'ran' if did else 'skipped (up to date)'}")
        elif args.command == "irf":
            from holdsim.pipeline import stage_irf

            if args.tensor or args.features:
                stage_irf(cfg, tensor_dir=args.tensor, features_path=args.features)
                print("irf: ran")
            else:
                did = run_stage(cfg, "irf", force=args.force)
                print(f"irf: {'ran' if did else 'skipped (up to date)'}")
        else:
            did = run_stage(cfg, args.command, force=args.force)
            print(f"{args.command}: {'ran' if did else 'skipped (up to date)'}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
