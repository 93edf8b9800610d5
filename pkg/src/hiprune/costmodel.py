"""Closed-form prefill FLOPs estimate for a vision-encoder + LLM pipeline.

Counting conventions, fixed for reproducibility:

* one multiply-accumulate = 2 FLOPs,
* per transformer layer over T tokens of width h with FFN width f:
  projections and FFN cost 2*T*(4*h^2 + 2*h*f_eff), attention score and
  value matmuls cost 4*T^2*h,
* gated FFNs (three matmuls instead of two) enter via an effective width
  f_eff = 3*f/2,
* embedding lookups, norms, and the vocabulary projection are excluded:
  they are negligible against the matmul terms during prefill.

The default presets fit published LLaVA profiling with a single free
parameter, the text prompt length; see scripts/fit_text_tokens.py.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

# prompt length fitted once against published LLaVA-NeXT-7B prefill FLOPs
# (least squares over the four published token budgets); see
# scripts/fit_text_tokens.py for the derivation
FITTED_TEXT_TOKENS = 45


@dataclass(frozen=True)
class CostModelSpec:
    """Dimensional parameters of one vision-LLM pipeline."""

    llm_layers: int
    llm_hidden: int
    llm_ffn: int
    llm_vocab: int
    vision_layers: int
    vision_hidden: int
    vision_ffn: int
    vision_tokens_per_crop: int
    crops: int
    text_tokens: int
    llm_gated_ffn: bool = True

    def __post_init__(self) -> None:
        for name in (
            "llm_layers", "llm_hidden", "llm_ffn", "llm_vocab",
            "vision_layers", "vision_hidden", "vision_ffn",
            "vision_tokens_per_crop", "crops",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.text_tokens < 0:
            raise ValueError(f"text_tokens must be >= 0, got {self.text_tokens}")

    def with_text_tokens(self, text_tokens: int) -> "CostModelSpec":
        return replace(self, text_tokens=text_tokens)


def _layer_flops(tokens: int, hidden: int, ffn: int, gated: bool) -> float:
    ffn_eff = 1.5 * ffn if gated else float(ffn)
    return 2.0 * tokens * (4.0 * hidden * hidden + 2.0 * hidden * ffn_eff) + (
        4.0 * tokens * tokens * hidden
    )


def vision_flops(spec: CostModelSpec) -> float:
    """Forward cost of the vision encoder over all crops."""
    per_crop = spec.vision_layers * _layer_flops(
        spec.vision_tokens_per_crop, spec.vision_hidden, spec.vision_ffn, gated=False
    )
    return spec.crops * per_crop


def prefill_flops(spec: CostModelSpec, visual_tokens: int) -> float:
    """Vision-encoder cost plus LLM prefill over visual + text tokens."""
    if visual_tokens < 0:
        raise ValueError(f"visual_tokens must be >= 0, got {visual_tokens}")
    seq = visual_tokens + spec.text_tokens
    llm = spec.llm_layers * _layer_flops(
        seq, spec.llm_hidden, spec.llm_ffn, spec.llm_gated_ffn
    )
    return vision_flops(spec) + llm


def flops_ratio(spec: CostModelSpec, full: int, pruned: int) -> float:
    """Prefill speedup factor of retaining ``pruned`` instead of ``full`` tokens."""
    if pruned > full:
        raise ValueError(f"pruned count {pruned} exceeds full count {full}")
    denom = prefill_flops(spec, pruned)
    if denom <= 0.0:
        raise ValueError("pruned prefill cost is not positive")
    return prefill_flops(spec, full) / denom


def _vicuna_7b(crops: int) -> CostModelSpec:
    # Vicuna-7B decoder with the CLIP-L/336 tower (24 layers, 577 tokens/crop)
    return CostModelSpec(
        llm_layers=32,
        llm_hidden=4096,
        llm_ffn=11008,
        llm_vocab=32000,
        vision_layers=24,
        vision_hidden=1024,
        vision_ffn=4096,
        vision_tokens_per_crop=577,
        crops=crops,
        text_tokens=FITTED_TEXT_TOKENS,
        llm_gated_ffn=True,
    )


PRESETS = {
    "llava-1.5-7b": _vicuna_7b(crops=1),
    "llava-next-7b": _vicuna_7b(crops=5),
}


def preset(name: str) -> CostModelSpec:
    """A named stock configuration; see PRESETS for the available names."""
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}, expected one of {sorted(PRESETS)}"
        ) from None
