"""Command-line interface.

    hiprune <prune|analyze|estimate-flops|synth|export-ranks|batch> [flags]

Machine output is JSON or CSV; an output path of ``-`` sends it to stdout.
Diagnostics go to stderr.  Exit codes: 0 success, 2 validation error,
3 I/O error.  Setting HIPRUNE_NO_VALIDATE=1 is equivalent to passing
``--no-validate`` everywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis, costmodel, pruner, scoring, store, synth
from .errors import HiPruneError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not (0.0 <= value <= 1.0):
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not (0.0 < value <= 1.0):
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {value}")
    return value


def _should_validate(args: argparse.Namespace) -> bool:
    if os.environ.get("HIPRUNE_NO_VALIDATE") == "1":
        return False
    return not getattr(args, "no_validate", False)


def _emit(text: str, out: str) -> None:
    """Write machine output to ``out``, or stdout when it is '-'. Atomic on disk."""
    if out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _selection_json(selection: pruner.Selection) -> str:
    return json.dumps(selection.to_json_dict(), separators=(",", ":")) + "\n"


def _format_float(value: float) -> str:
    return f"{value:.10g}"


def _cmd_prune(args: argparse.Namespace) -> int:
    stack = store.read_stack(args.stack, validate=_should_validate(args))
    if args.object_layer is not None:
        object_layer = args.object_layer
    else:
        object_layer = analysis.default_object_layer(stack.layers)
        rule = (
            "depth preset"
            if stack.layers in analysis.OBJECT_LAYER_PRESETS
            else "round(3L/8) heuristic"
        )
        print(
            f"note: --object-layer not given, using layer {object_layer} "
            f"({rule} for {stack.layers} layers)",
            file=sys.stderr,
        )
    config = pruner.HiPruneConfig(
        budget=args.budget,
        object_layer=object_layer,
        alpha=args.alpha,
        scheme=args.scheme,
        boundary_mode=args.boundary_mode,
        include_cls_queries=not args.exclude_cls_queries,
    )
    if args.tokens is not None:
        tokens = store.read_tokens(args.tokens)
        selection, pruned = pruner.prune_tokens(stack, tokens, config)
        out_tokens = Path(args.pruned_tokens)
        tmp = out_tokens.with_name(out_tokens.name + ".tmp")
        store.write_tokens(pruned, tmp)
        os.replace(tmp, out_tokens)
    else:
        selection = pruner.prune(stack, config)
    for message in selection.warnings:
        print(f"warning: {message}", file=sys.stderr)
    _emit(_selection_json(selection), args.out)
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    stack = store.read_stack(args.stack, validate=_should_validate(args))
    curve = analysis.dispersion_curve(stack, args.fraction)
    norm_iou: list[float | None] | None = None
    if args.mask is not None:
        mask = analysis.read_mask(args.mask, stack.grid)
        layers = list(range(stack.layers))
        norm_iou = analysis.normalized_layer_iou(stack, mask, layers, args.fraction)
    if args.format == "json":
        payload: dict = {
            "layers": stack.layers,
            "fraction": args.fraction,
            "dispersion": curve,
        }
        if norm_iou is not None:
            payload["normalized_iou"] = norm_iou
        _emit(json.dumps(payload, separators=(",", ":")) + "\n", args.out)
    else:
        lines = []
        if norm_iou is None:
            lines.append("layer,dispersion")
            for layer, value in enumerate(curve):
                lines.append(f"{layer},{_format_float(value)}")
        else:
            lines.append("layer,dispersion,normalized_iou")
            for layer, (value, ratio) in enumerate(zip(curve, norm_iou)):
                cell = "" if ratio is None else _format_float(ratio)
                lines.append(f"{layer},{_format_float(value)},{cell}")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_estimate_flops(args: argparse.Namespace) -> int:
    if args.spec is not None:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        spec = costmodel.CostModelSpec(**raw)
    else:
        spec = costmodel.preset(args.preset)
    if args.text_tokens is not None:
        spec = spec.with_text_tokens(args.text_tokens)
    flops = costmodel.prefill_flops(spec, args.visual_tokens)
    payload = {
        "visual_tokens": args.visual_tokens,
        "text_tokens": spec.text_tokens,
        "prefill_flops": flops,
        "prefill_tflops": flops / 1e12,
    }
    _emit(json.dumps(payload, separators=(",", ":")) + "\n", args.out)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = synth.spec_from_dict(raw)
    stack = synth.generate(spec)
    out = Path(args.out)
    tmp = out.with_name(out.name + ".tmp")
    store.write_stack(stack, tmp)
    os.replace(tmp, out)
    sidecar = store.sidecar_path(out)
    sidecar_tmp = sidecar.with_name(sidecar.name + ".tmp")
    sidecar_tmp.write_text(
        json.dumps({"generator": "hiprune synth", "spec": raw}, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    os.replace(sidecar_tmp, sidecar)
    return EXIT_OK


def _cmd_export_ranks(args: argparse.Namespace) -> int:
    stack = store.read_stack(args.stack, validate=_should_validate(args))
    matrix = scoring.rank_trajectory(stack)
    if args.format == "u32":
        blob = matrix.astype("<u4").tobytes()
        if args.out == "-":
            sys.stdout.buffer.write(blob)
        else:
            out = Path(args.out)
            tmp = out.with_name(out.name + ".tmp")
            tmp.write_bytes(blob)
            os.replace(tmp, out)
    else:
        lines = [",".join(str(int(v)) for v in row) for row in matrix]
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _batch_config(defaults: dict, item: dict, layers: int) -> dict:
    merged = dict(defaults)
    merged.update({k: item[k] for k in item if k in (
        "object_layer", "alpha", "scheme", "boundary_mode", "include_cls_queries"
    )})
    merged.setdefault("object_layer", analysis.default_object_layer(layers))
    merged.setdefault("alpha", pruner.DEFAULT_ALPHA)
    merged.setdefault("scheme", pruner.DEFAULT_SCHEME)
    merged.setdefault("boundary_mode", pruner.DEFAULT_BOUNDARY_MODE)
    merged.setdefault("include_cls_queries", True)
    return merged


def _cmd_batch(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    items = manifest.get("items", [])
    defaults = manifest.get("config", {})
    total_budget = manifest.get("total_budget")
    base = manifest_path.parent
    validate = _should_validate(args)

    loaded: list[tuple[dict, Path, store.AttentionStack | None, str]] = []
    for item in items:
        stack_path = Path(item["stack"])
        if not stack_path.is_absolute():
            stack_path = base / stack_path
        try:
            stack = store.read_stack(stack_path, validate=validate)
            loaded.append((item, stack_path, stack, ""))
        except (OSError, HiPruneError, ValueError) as exc:
            loaded.append((item, stack_path, None, str(exc)))

    if total_budget is not None:
        if any("budget" in item for item, *_ in loaded):
            raise ValueError(
                "manifest mixes total_budget with per-item budgets; use one scheme"
            )
        readable = [entry for entry in loaded if entry[2] is not None]
        weights = [entry[2].n_patches for entry in readable]
        shares = pruner.apportion_budget(total_budget, weights) if readable else []
        budgets = {id(entry): share for entry, share in zip(readable, shares)}
    else:
        budgets = {}
        for entry in loaded:
            item = entry[0]
            if "budget" not in item:
                raise ValueError(
                    f"item {item.get('stack')!r} has no budget and the manifest "
                    "declares no total_budget"
                )
            budgets[id(entry)] = int(item["budget"])

    out_dir = Path(args.out_dir) if args.out_dir is not None else None
    rows = ["item,n_patches,budget,anchors,buffers,registers,status"]
    failures = 0
    for entry in loaded:
        item, stack_path, stack, error = entry
        name = str(item["stack"])
        if stack is None:
            rows.append(f"{name},,,,,,failed: {error}")
            failures += 1
            continue
        budget = budgets[id(entry)]
        config_dict = _batch_config(defaults, item, stack.layers)
        try:
            config = pruner.HiPruneConfig(budget=budget, **config_dict)
            selection = pruner.prune(stack, config)
        except (HiPruneError, ValueError) as exc:
            rows.append(f"{name},{stack.n_patches},{budget},,,,failed: {exc}")
            failures += 1
            continue
        if "out" in item:
            out_path = Path(item["out"])
            if not out_path.is_absolute():
                out_path = base / out_path
        else:
            stem = stack_path.stem
            out_path = (out_dir or stack_path.parent) / f"{stem}.selection.json"
        _emit(_selection_json(selection), str(out_path))
        rows.append(
            f"{name},{stack.n_patches},{budget},{len(selection.anchors)},"
            f"{len(selection.buffers)},{len(selection.registers)},ok"
        )
    _emit("\n".join(rows) + "\n", args.report)
    if items and failures == len(items):
        print("error: every manifest item failed", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiprune",
        description="Attention-guided visual token pruning and analysis over ATNS files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="select retained token indices for one stack")
    p.add_argument("--stack", required=True, help="input ATNS file")
    p.add_argument("--budget", required=True, type=_positive_int,
                   help="number of tokens to retain")
    p.add_argument("--object-layer", type=_nonneg_int, default=None,
                   help="anchor source layer (default: depth-based preset)")
    p.add_argument("--alpha", type=_unit_interval, default=pruner.DEFAULT_ALPHA,
                   help="anchor+buffer share of the budget (default 0.1)")
    p.add_argument("--scheme", choices=sorted(pruner.SCHEME_OFFSETS),
                   default=pruner.DEFAULT_SCHEME, help="buffer neighbourhood")
    p.add_argument("--boundary-mode", choices=pruner.BOUNDARY_MODES,
                   default=pruner.DEFAULT_BOUNDARY_MODE,
                   help="grid-edge behaviour of buffer offsets")
    p.add_argument("--exclude-cls-queries", action="store_true",
                   help="sum scores over patch query rows only")
    p.add_argument("--tokens", default=None, help="optional TOKM token matrix to prune")
    p.add_argument("--pruned-tokens", default=None,
                   help="output TOKM path (required with --tokens)")
    p.add_argument("--out", default="-", help="selection JSON path or - for stdout")
    p.add_argument("--no-validate", action="store_true",
                   help="skip attention row-sum validation")

    p = sub.add_parser("analyze", help="per-layer dispersion and mask IoU curves")
    p.add_argument("--stack", required=True, help="input ATNS file")
    p.add_argument("--mask", default=None,
                   help="object mask (binary PGM or raw bytes, nonzero = object)")
    p.add_argument("--fraction", type=_fraction, default=analysis.DEFAULT_FRACTION,
                   help="top-score fraction defining high-attention tokens")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-", help="output path or - for stdout")
    p.add_argument("--no-validate", action="store_true")

    p = sub.add_parser("estimate-flops", help="closed-form prefill FLOPs estimate")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=sorted(costmodel.PRESETS))
    group.add_argument("--spec", help="JSON file with CostModelSpec fields")
    p.add_argument("--visual-tokens", required=True, type=_nonneg_int)
    p.add_argument("--text-tokens", type=_nonneg_int, default=None,
                   help="override the preset's prompt length")
    p.add_argument("--out", default="-")

    p = sub.add_parser("synth", help="generate a synthetic ATNS stack")
    p.add_argument("--spec", required=True, help="JSON generation recipe")
    p.add_argument("--out", required=True, help="output ATNS path")

    p = sub.add_parser("export-ranks", help="per-layer rank matrix of a stack")
    p.add_argument("--stack", required=True)
    p.add_argument("--format", choices=("csv", "u32"), default="csv",
                   help="csv rows or raw little-endian u32 matrix")
    p.add_argument("--out", default="-")
    p.add_argument("--no-validate", action="store_true")

    p = sub.add_parser("batch", help="prune every stack in a manifest")
    p.add_argument("--manifest", required=True, help="JSON manifest of stacks and budgets")
    p.add_argument("--out-dir", default=None,
                   help="directory for selection files (default: next to each stack)")
    p.add_argument("--report", default="-", help="aggregate CSV path or - for stdout")
    p.add_argument("--no-validate", action="store_true")

    return parser


_COMMANDS = {
    "prune": _cmd_prune,
    "analyze": _cmd_analyze,
    "estimate-flops": _cmd_estimate_flops,
    "synth": _cmd_synth,
    "export-ranks": _cmd_export_ranks,
    "batch": _cmd_batch,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "prune" and (args.tokens is None) != (args.pruned_tokens is None):
        print("error: --tokens and --pruned-tokens must be given together",
              file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HiPruneError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
