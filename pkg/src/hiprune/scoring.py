"""Per-patch attention importance scores and their rank transforms.

The global score of key token k at one layer is the column sum of the
attention matrix over all query rows, averaged over heads:

    score[k] = (1/H) * sum_{h, q} A[h, q, k]

Class-token columns are dropped from the result; class-token query rows
are included in the sum by default (``include_cls_queries=False`` restricts
the sum to patch queries).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, UnsupportedError
from .store import AttentionStack


@dataclass
class ScoreVector:
    """Aggregated attention scores for the patch tokens of one layer."""

    values: np.ndarray
    layer: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("scores must be a 1-D vector")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class RankVector:
    """Ascending ranks of a score vector; always a permutation of 0..n-1."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.values)


def aggregate_scores(
    stack: AttentionStack, layer: int, include_cls_queries: bool = True
) -> ScoreVector:
    """Head-averaged column sums of one layer's attention, patch keys only."""
    if not (0 <= layer < stack.layers):
        raise BoundsError(f"layer {layer} out of range for {stack.layers}-layer stack")
    attn = stack.data[layer]
    if not include_cls_queries:
        attn = attn[:, stack.cls_count :, :]
    # sum over queries, mean over heads, then drop class-token key columns
    per_key = attn.sum(axis=1, dtype=np.float64).mean(axis=0)
    return ScoreVector(values=per_key[stack.cls_count :], layer=layer)


def cls_scores(stack: AttentionStack, layer: int) -> ScoreVector:
    """Head-averaged class-token query row; requires a class token."""
    if stack.cls_count != 1:
        raise UnsupportedError(
            "class-token scoring needs a class token; this stack has none "
            "(use the global aggregation instead)"
        )
    if not (0 <= layer < stack.layers):
        raise BoundsError(f"layer {layer} out of range for {stack.layers}-layer stack")
    row = stack.data[layer, :, 0, 1:].astype(np.float64).mean(axis=0)
    return ScoreVector(values=row, layer=layer)


def rank_transform(scores: ScoreVector) -> RankVector:
    """Ascending ranks with lower-index-first tie-break.

    rank[i] counts the j with scores[j] < scores[i], or scores[j] == scores[i]
    and j < i; equivalently a stable double argsort, so e.g.
    [0.2, 0.3, 0.5, 0.1] -> [1, 2, 3, 0].
    """
    order = np.argsort(scores.values, kind="stable")
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(len(order))
    return RankVector(values=ranks)


def rank_trajectory(stack: AttentionStack, include_cls_queries: bool = True) -> np.ndarray:
    """Per-layer rank vectors stacked into an [layers, n_patches] int matrix."""
    rows = [
        rank_transform(aggregate_scores(stack, layer, include_cls_queries)).values
        for layer in range(stack.layers)
    ]
    return np.stack(rows, axis=0)
