"""Command-line entry point.

Exit codes match the curation pipeline's convention: 0 on success, 1
for bad arguments or malformed input files, 2 when the model cannot be
loaded or the export itself fails.
"""

from __future__ import annotations

import argparse
import sys

from .backends import ModelLoadError
from .config import AdapterConfig
from .export import export_token_probs
from .pairs import PairsFormatError, load_pairs


class _Parser(argparse.ArgumentParser):
    # usage mistakes are exit code 1; argparse's default of 2 is reserved
    # for runtime failures
    def error(self, message: str):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="vlit-adapter",
        description="Export two-condition answer-token probabilities from a real model "
        "into the curation pipeline's samples format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    export = sub.add_parser("export", help="probe a model over a QA pairs file and write a samples file")
    export.add_argument("--model", required=True, help="model id; 'stub:<seed>' runs the offline deterministic backend")
    export.add_argument("--input", required=True, help="QA pairs file (JSONL)")
    export.add_argument("--output", required=True, help="samples file to write (JSONL)")
    export.add_argument("--device", default="cpu", help="device hint for real models (default: cpu)")
    export.add_argument("--batch-size", type=int, default=1, help="probe batch size (default: 1)")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        config = AdapterConfig(
            model=args.model,
            output_path=args.output,
            device=args.device,
            batch_size=args.batch_size,
        )
        pairs = load_pairs(args.input)
    except (PairsFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        report = export_token_probs(pairs, config)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2

    for index, reason in report.skipped:
        print(f"pair {index} skipped: {reason}", file=sys.stderr)
    print(f"wrote {report.written} records to {args.output} ({len(report.skipped)} skipped)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
