"""Dump per-layer multi-head attention from a vision transformer.

The exporter loads a Huggingface checkpoint (or a local model directory),
forces the eager attention implementation so attention weights are
materialized, runs one image through the vision tower, and writes the
per-layer attention stack as an ATNS file plus a JSON provenance sidecar.
Optionally the output-layer patch tokens go to a TOKM file.

Dynamic-resolution towers that interleave windowed attention return
non-square or missing maps for some blocks; such layers are skipped with a
warning rather than exported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

ROW_SUM_TOLERANCE = 1e-3


class ExportError(RuntimeError):
    """Export failed for a reason the caller can fix (model, image, flags)."""


class UnsupportedModelError(ExportError):
    """The model does not expose attention in an exportable shape."""


@dataclass
class ExportSpec:
    model: str
    image: str
    out: str
    layers: str = "all"  # "all" or "last:<k>"
    tokens_out: str | None = None
    revision: str | None = None  # Huggingface revision pin, when applicable


@dataclass
class ExportResult:
    out: Path
    layers_exported: list[int]
    heads: int
    n_total: int
    rows: int
    cols: int
    cls_count: int
    tokens_out: Path | None = None
    warnings: list[str] = field(default_factory=list)


def parse_layer_policy(text: str) -> int | None:
    """None for "all", or the k of "last:k"."""
    if text == "all":
        return None
    if text.startswith("last:"):
        k = int(text.split(":", 1)[1])
        if k < 1:
            raise ValueError(f"last:{k} must keep at least one layer")
        return k
    raise ValueError(f"layer policy must be 'all' or 'last:<k>', got {text!r}")


def load_vision_tower(model_id: str, revision: str | None = None) -> torch.nn.Module:
    """The vision transformer of a checkpoint, in eval mode with eager attention.

    Composite checkpoints (CLIP, SigLIP, and similar two-tower models)
    contribute their ``vision_model`` submodule; bare vision models are used
    directly.
    """
    from transformers import AutoModel

    model = AutoModel.from_pretrained(
        model_id, attn_implementation="eager", revision=revision
    )
    tower = getattr(model, "vision_model", model)
    tower.eval()
    return tower


def preprocess_image(image_path: str, model_id: str, config) -> tuple[torch.Tensor, str]:
    """Pixel tensor for the tower, and a summary of how it was produced.

    The checkpoint's own image processor is used when it loads; otherwise
    the image is resized to the tower's native input size and normalized to
    mean 0.5 / std 0.5 per channel.
    """
    image = Image.open(image_path).convert("RGB")
    try:
        from transformers import AutoImageProcessor

        processor = AutoImageProcessor.from_pretrained(model_id)
        pixel = processor(images=image, return_tensors="pt").pixel_values
        return pixel, f"processor:{type(processor).__name__}"
    except Exception:
        side = int(getattr(config, "image_size"))
        resized = image.resize((side, side), Image.BICUBIC)
        array = np.asarray(resized, dtype=np.float32) / 255.0
        array = (array - 0.5) / 0.5
        pixel = torch.from_numpy(array).permute(2, 0, 1).unsqueeze(0)
        return pixel, f"resize:{side}x{side},normalize:mean0.5/std0.5"


def _collect_attention(
    attentions, warnings: list[str]
) -> tuple[np.ndarray, list[int], int, int]:
    """Stack exportable [1, H, N, N] attention maps; skip the rest."""
    reference = None
    kept: list[np.ndarray] = []
    kept_indices: list[int] = []
    for index, attn in enumerate(attentions):
        if attn is None:
            warnings.append(f"layer {index}: no attention returned, skipped")
            continue
        if attn.ndim != 4 or attn.shape[0] != 1 or attn.shape[2] != attn.shape[3]:
            warnings.append(
                f"layer {index}: attention shape {tuple(attn.shape)} "
                "is not a square per-image map, skipped"
            )
            continue
        shape = tuple(attn.shape[1:])
        if reference is None:
            reference = shape
        elif shape != reference:
            warnings.append(
                f"layer {index}: attention shape {shape} differs from "
                f"{reference}, skipped"
            )
            continue
        kept.append(attn[0].to(torch.float32).cpu().numpy())
        kept_indices.append(index)
    if not kept:
        raise UnsupportedModelError(
            "no layer produced exportable attention weights; the model may "
            "only support fused attention kernels (load with the eager "
            "implementation) or use windowed attention throughout"
        )
    heads, n_total = reference[0], reference[1]
    return np.stack(kept, axis=0), kept_indices, heads, n_total


def export(spec: ExportSpec) -> ExportResult:
    """Run one image through the tower and write the ATNS file (+ sidecar)."""
    keep_last = parse_layer_policy(spec.layers)
    tower = load_vision_tower(spec.model, spec.revision)
    config = tower.config
    pixel, preprocessing = preprocess_image(spec.image, spec.model, config)

    with torch.no_grad():
        output = tower(pixel_values=pixel, output_attentions=True)
    if not getattr(output, "attentions", None):
        raise UnsupportedModelError(
            "the model returned no attentions; it cannot be exported"
        )

    warnings: list[str] = []
    data, kept_indices, heads, n_total = _collect_attention(
        output.attentions, warnings
    )

    patch = int(getattr(config, "patch_size"))
    rows = pixel.shape[2] // patch
    cols = pixel.shape[3] // patch
    cls_count = n_total - rows * cols
    if cls_count not in (0, 1):
        raise UnsupportedModelError(
            f"cannot reconcile {n_total} tokens with a {rows}x{cols} patch "
            f"grid: {cls_count} unexplained tokens (only 0 or 1 class "
            "tokens are representable)"
        )

    if keep_last is not None:
        data = data[-keep_last:]
        kept_indices = kept_indices[-keep_last:]

    sums = data.sum(axis=3, dtype=np.float64)
    worst = float(np.abs(sums - 1.0).max())
    if worst > ROW_SUM_TOLERANCE:
        raise ExportError(
            f"attention rows deviate from 1 by {worst:.2e} "
            f"(tolerance {ROW_SUM_TOLERANCE}); the checkpoint may be "
            "running in too low a precision"
        )

    from . import atns

    out = Path(spec.out)
    atns.write_atns(out, data, rows, cols, cls_count)

    tokens_out = None
    if spec.tokens_out is not None:
        hidden = output.last_hidden_state[0].to(torch.float32).cpu().numpy()
        tokens = hidden[cls_count:]
        if tokens.shape[0] != rows * cols:
            raise ExportError(
                f"token count {tokens.shape[0]} does not match the "
                f"{rows}x{cols} patch grid; refusing to write"
            )
        tokens_out = Path(spec.tokens_out)
        atns.write_tokm(tokens_out, tokens)

    _write_sidecar(out, spec, tower, kept_indices, preprocessing, warnings)
    return ExportResult(
        out=out,
        layers_exported=kept_indices,
        heads=heads,
        n_total=n_total,
        rows=rows,
        cols=cols,
        cls_count=cls_count,
        tokens_out=tokens_out,
        warnings=warnings,
    )


def _write_sidecar(
    out: Path,
    spec: ExportSpec,
    tower: torch.nn.Module,
    kept_indices: list[int],
    preprocessing: str,
    warnings: list[str],
) -> None:
    import transformers

    provenance = {
        "model": spec.model,
        "revision": spec.revision or "unpinned",
        "model_class": type(tower).__name__,
        "image": spec.image,
        "layers_exported": kept_indices,
        "preprocessing": preprocessing,
        "torch": torch.__version__,
        "transformers": transformers.__version__,
    }
    if warnings:
        provenance["warnings"] = warnings
    out.with_suffix(".json").write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
