"""``mpq-export <checkpoint> --out <prefix> [--mark-first-last-8bit]``"""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, export_checkpoint


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpq-export",
        description="export a quantized checkpoint to the planner's tensor container",
    )
    parser.add_argument("checkpoint", help="checkpoint file with _scale/_precision companions")
    parser.add_argument("--out", required=True, help="output prefix for the three emitted files")
    parser.add_argument(
        "--mark-first-last-8bit",
        action="store_true",
        help="pin the first and last exported layers at 8-bit in the skeleton manifest",
    )
    args = parser.parse_args(argv)
    try:
        result = export_checkpoint(args.checkpoint, args.out, args.mark_first_last_8bit)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {result.tensor_count} tensors from {result.source_path}")
    for path in (result.tensors_path, result.blob_path, result.network_path):
        print(f"wrote {path}")
    return 0


def entry() -> None:
    sys.exit(main())
