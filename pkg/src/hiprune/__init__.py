"""Training-free visual token pruning from hierarchical encoder attention.

The package reads per-layer multi-head attention stacks from the ATNS
binary container (or generates synthetic ones), aggregates them into
per-patch importance scores, and selects anchor / buffer / register token
sets under an exact retention budget.  Companion modules provide object-IoU
and dispersion diagnostics and an analytic transformer FLOPs model.
"""

from .analysis import (
    LayerPartition,
    SegMask,
    default_object_layer,
    default_partition,
    dispersion,
    dispersion_curve,
    iou_with_mask,
    normalized_layer_iou,
    top_fraction_indices,
)
from .costmodel import CostModelSpec, flops_ratio, prefill_flops, preset
from .errors import (
    AttentionValidationError,
    BoundsError,
    FormatError,
    GeometryError,
    HiPruneError,
    UnsupportedError,
)
from .pruner import (
    HiPruneConfig,
    Selection,
    anchor_count,
    apportion_budget,
    cluster_size,
    expand_buffers,
    gather_tokens,
    prune,
    prune_scores,
    prune_tokens,
    select_anchors,
    select_registers,
)
from .scoring import (
    RankVector,
    ScoreVector,
    aggregate_scores,
    cls_scores,
    rank_trajectory,
    rank_transform,
)
from .store import (
    AttentionStack,
    TokenGrid,
    TokenMatrix,
    atns_file_size,
    patch_index_of,
    read_stack,
    read_tokens,
    write_stack,
    write_tokens,
)
from .synth import SplitMix64, SynthSpec, generate, oracle_prune, softmax_attention

__version__ = "0.1.0"

__all__ = [
    "AttentionStack",
    "AttentionValidationError",
    "BoundsError",
    "CostModelSpec",
    "FormatError",
    "GeometryError",
    "HiPruneConfig",
    "HiPruneError",
    "LayerPartition",
    "RankVector",
    "ScoreVector",
    "SegMask",
    "Selection",
    "SplitMix64",
    "SynthSpec",
    "TokenGrid",
    "TokenMatrix",
    "UnsupportedError",
    "aggregate_scores",
    "anchor_count",
    "apportion_budget",
    "atns_file_size",
    "cls_scores",
    "cluster_size",
    "default_object_layer",
    "default_partition",
    "dispersion",
    "dispersion_curve",
    "expand_buffers",
    "flops_ratio",
    "gather_tokens",
    "generate",
    "iou_with_mask",
    "normalized_layer_iou",
    "oracle_prune",
    "patch_index_of",
    "prefill_flops",
    "preset",
    "prune",
    "prune_scores",
    "prune_tokens",
    "rank_trajectory",
    "rank_transform",
    "read_stack",
    "read_tokens",
    "select_anchors",
    "select_registers",
    "softmax_attention",
    "top_fraction_indices",
    "write_stack",
    "write_tokens",
]
