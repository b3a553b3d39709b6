"""Command line: export a checkpoint and print the manifest checksum."""

from __future__ import annotations

import argparse
import sys

from vista_export.export import ExportError, ExportSpec, export_weights


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        prog="vista-export",
        description="Convert a ResNet-18 checkpoint to a VSTW weight file "
        "with normalization folded into the convolutions.",
    )
    parser.add_argument(
        "--source",
        default="torchvision:resnet18",
        help="torchvision:resnet18 | random:<seed> | path to a state-dict file",
    )
    parser.add_argument("--out", required=True, help="output .vstw path")
    parser.add_argument(
        "--no-fold",
        dest="fold",
        action="store_false",
        help="export raw conv weights plus separate norm tensors (debugging; "
        "the detector only consumes folded files)",
    )
    args = parser.parse_args(argv)
    try:
        checksum = export_weights(ExportSpec(source=args.source, output=args.out, fold_norm=args.fold))
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2)
    print(f"wrote {args.out}")
    print(f"checksum_sha256 = {checksum}")


if __name__ == "__main__":
    main()
