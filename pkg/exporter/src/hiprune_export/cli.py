"""hiprune-export: dump vision-transformer attention into ATNS files."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportSpec, export, parse_layer_policy

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


def _layer_policy(text: str) -> str:
    try:
        parse_layer_policy(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiprune-export",
        description="Export per-layer attention of a vision transformer to ATNS.",
    )
    parser.add_argument("--model", required=True,
                        help="Huggingface model id or local model directory")
    parser.add_argument("--image", required=True, help="input image path")
    parser.add_argument("--out", required=True, help="output ATNS path")
    parser.add_argument("--layers", type=_layer_policy, default="all",
                        help="'all' or 'last:<k>' (default all)")
    parser.add_argument("--tokens-out", default=None,
                        help="also write the output-layer patch tokens (TOKM)")
    parser.add_argument("--revision", default=None,
                        help="model revision to pin in the provenance sidecar")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = ExportSpec(model=args.model, image=args.image, out=args.out,
                      layers=args.layers, tokens_out=args.tokens_out,
                      revision=args.revision)
    try:
        result = export(spec)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ExportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"wrote {result.out}: {len(result.layers_exported)} layers, "
        f"{result.heads} heads, {result.n_total} tokens "
        f"({result.rows}x{result.cols} grid, cls_count={result.cls_count})",
        file=sys.stderr,
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
