"""Command-line entry point for the data-curation pipeline.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
stage fails while running.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .pipeline import (
    PipelineConfig,
    StageError,
    run_ablation_grid,
    run_pipeline,
    run_stage,
    sweep_selection_fraction,
)

_STAGE_COMMANDS = {
    "generate-initial": "generate_initial",
    "filter": "filter",
    "score": "score",
    "partition": "partition",
    "train-crm": "train_crm",
    "train-clm": "train_clm",
    "generate-final": "generate_final",
    "report": "report",
}

_DEFAULT_SWEEP = (0.05, 0.10, 0.20, 0.40)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors by default; the contract wants 1.
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="vlitgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, help_text: str, sweep: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; defaults apply when omitted")
        p.add_argument("--workdir", required=True, help="artifact directory for this run")
        p.add_argument("--seed", type=int, help="override the config seed")
        if sweep:
            p.add_argument(
                "--fraction",
                type=float,
                action="append",
                help="selection fraction to sweep; repeat for several (default 0.05 0.1 0.2 0.4)",
            )
        else:
            p.add_argument("--fraction", type=float, help="override the selection fraction")
        p.add_argument("--no-crm", action="store_true", help="disable the relevance-selection training phase")
        p.add_argument("--no-clm", action="store_true", help="disable the contrastive training phase")
        return p

    for name in _STAGE_COMMANDS:
        add(name, f"run the {name.replace('-', ' ')} stage")
    add("pipeline", "run every enabled stage in order")
    add("sweep", "retrain the selection phase across fractions", sweep=True)
    add("ablation", "run the four-cell training-phase ablation grid")
    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    fraction = getattr(args, "fraction", None)
    if fraction is not None and not isinstance(fraction, list):
        overrides["selection_fraction"] = fraction
    if args.no_crm:
        overrides["enable_crm"] = False
    if args.no_clm:
        overrides["enable_clm"] = False
    return replace(cfg, **overrides) if overrides else cfg


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse signals usage errors (and --help) by exiting
        return int(exc.code or 0)
    try:
        cfg = _resolve_config(args)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"vlitgen: config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command in _STAGE_COMMANDS:
            outputs = run_stage(_STAGE_COMMANDS[args.command], cfg, args.workdir)
            for path in outputs:
                print(path)
        elif args.command == "pipeline":
            report = run_pipeline(cfg, args.workdir)
            print(f"initial mean i2c: {report.initial_mean_i2c:.6f}")
            print(f"final mean i2c: {report.final_mean_i2c:.6f}")
            print(f"improved: {'yes' if report.improved else 'no'}")
        elif args.command == "sweep":
            fractions = args.fraction if args.fraction else list(_DEFAULT_SWEEP)
            rows = sweep_selection_fraction(cfg, fractions, args.workdir)
            print("fraction,post_mean_i2c")
            for f, mean in rows:
                print(f"{f:g},{mean:.6f}")
        elif args.command == "ablation":
            rows = run_ablation_grid(cfg, args.workdir)
            print("cell,enable_crm,enable_clm,initial_mean_i2c,final_mean_i2c")
            for row in rows:
                print(
                    f"{row['cell']},{row['enable_crm']},{row['enable_clm']},"
                    f"{row['initial_mean_i2c']:.6f},{row['final_mean_i2c']:.6f}"
                )
        else:  # pragma: no cover - argparse enforces the command set
            return 1
    except ValueError as exc:
        print(f"vlitgen: invalid argument: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"vlitgen: stage failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
