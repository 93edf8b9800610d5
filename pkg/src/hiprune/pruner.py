"""Anchor / buffer / register token selection.

Given a retention budget, the pipeline keeps three disjoint groups of patch
indices:

* anchors: highest-scoring tokens at the object layer,
* buffers: grid neighbours of the anchors (spatial continuity),
* registers: highest-scoring remaining tokens at the last stored layer
  (global context), filling the budget exactly.

All selections are rank-based with a lower-index-first tie-break, so the
result depends only on score orderings and is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, GeometryError
from .scoring import ScoreVector, aggregate_scores
from .store import AttentionStack, TokenGrid, TokenMatrix

# scheme -> (row, col) neighbour offsets of one anchor
SCHEME_OFFSETS: dict[str, tuple[tuple[int, int], ...]] = {
    "cross4": ((0, -1), (0, 1), (-1, 0), (1, 0)),
    "square8": (
        (-1, -1), (-1, 0), (-1, 1),
        (0, -1), (0, 1),
        (1, -1), (1, 0), (1, 1),
    ),
    "row2": ((0, -1), (0, 1)),
}

BOUNDARY_MODES = ("paper_intersect", "grid_aware", "clamp")

DEFAULT_ALPHA = 0.1
DEFAULT_SCHEME = "cross4"
DEFAULT_BOUNDARY_MODE = "paper_intersect"


def cluster_size(scheme: str) -> int:
    """Anchor plus its neighbour count: 5 for cross4, 9 for square8, 3 for row2."""
    if scheme not in SCHEME_OFFSETS:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {sorted(SCHEME_OFFSETS)}")
    return 1 + len(SCHEME_OFFSETS[scheme])


def _round_half_away(x: float) -> int:
    """round() with exact halves going away from zero (x is nonnegative here)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HiPruneConfig:
    """Knobs of one pruning run.

    budget: number of tokens to retain (N').
    object_layer: layer whose scores pick the anchors.
    alpha: share of the budget given to anchor+buffer clusters, in [0, 1].
    scheme: buffer neighbourhood, one of cross4 / square8 / row2.
    boundary_mode: how neighbour indices behave at grid edges.
        paper_intersect  keep any flat index in [0, n_patches); +-1 may wrap
                         across row ends,
        grid_aware       drop neighbours that leave the rectangle,
        clamp            clamp flat indices into [0, n_patches-1], then dedup.
    include_cls_queries: include class-token query rows in score sums.
    """

    budget: int
    object_layer: int
    alpha: float = DEFAULT_ALPHA
    scheme: str = DEFAULT_SCHEME
    boundary_mode: str = DEFAULT_BOUNDARY_MODE
    include_cls_queries: bool = True

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.scheme not in SCHEME_OFFSETS:
            raise ValueError(
                f"unknown scheme {self.scheme!r}, expected one of {sorted(SCHEME_OFFSETS)}"
            )
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(
                f"unknown boundary mode {self.boundary_mode!r}, "
                f"expected one of {BOUNDARY_MODES}"
            )
        if self.object_layer < 0:
            raise ValueError(f"object_layer must be >= 0, got {self.object_layer}")


@dataclass
class Selection:
    """Disjoint anchor/buffer/register index groups and their ordered union."""

    anchors: list[int]
    buffers: list[int]
    registers: list[int]
    retained: list[int]
    n_patches: int
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_json_dict(self) -> dict:
        out = {
            "anchors": self.anchors,
            "buffers": self.buffers,
            "registers": self.registers,
            "retained": self.retained,
        }
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def anchor_count(config: HiPruneConfig) -> int:
    """Number of anchor tokens: round(alpha * budget / cluster_size)."""
    return _round_half_away(config.alpha * config.budget / cluster_size(config.scheme))


def _descending_order(values: np.ndarray) -> np.ndarray:
    """Indices sorted by descending value, lower index first on ties."""
    return np.argsort(-values, kind="stable")


def select_anchors(scores: ScoreVector, n_a: int) -> list[int]:
    """The n_a highest-scoring indices, lower index first on ties, ascending."""
    if n_a > len(scores):
        raise BoundsError(f"cannot pick {n_a} anchors from {len(scores)} tokens")
    if n_a <= 0:
        return []
    top = _descending_order(scores.values)[:n_a]
    return sorted(int(i) for i in top)


def expand_buffers(
    anchors: list[int] | set[int],
    grid: TokenGrid,
    scheme: str,
    boundary_mode: str,
) -> list[int]:
    """Union of the anchors' neighbour indices under the boundary rule.

    Anchor indices themselves may appear in the result (their neighbours can
    be other anchors, and clamping can map edges back onto an anchor); the
    pipeline removes them when forming the reported buffer group.
    """
    offsets = SCHEME_OFFSETS[scheme]
    n = grid.n_patches
    out: set[int] = set()
    for idx in anchors:
        for dr, dc in offsets:
            if boundary_mode == "grid_aware":
                r, c = divmod(idx, grid.cols)
                rr, cc = r + dr, c + dc
                if 0 <= rr < grid.rows and 0 <= cc < grid.cols:
                    out.add(rr * grid.cols + cc)
            else:
                flat = idx + dr * grid.cols + dc
                if boundary_mode == "clamp":
                    out.add(min(max(flat, 0), n - 1))
                elif 0 <= flat < n:
                    out.add(flat)
    return sorted(out)


def select_registers(scores_last: ScoreVector, excluded: set[int], k: int) -> list[int]:
    """The k highest-scoring indices outside ``excluded``, ascending."""
    available = len(scores_last) - len(excluded)
    if k > available:
        raise BoundsError(
            f"cannot pick {k} registers: only {available} tokens remain"
        )
    if k <= 0:
        return []
    picked: list[int] = []
    for i in _descending_order(scores_last.values):
        if int(i) in excluded:
            continue
        picked.append(int(i))
        if len(picked) == k:
            break
    return sorted(picked)


def prune_scores(
    object_scores: ScoreVector,
    last_scores: ScoreVector,
    grid: TokenGrid,
    config: HiPruneConfig,
) -> Selection:
    """Run the selection pipeline on precomputed score vectors."""
    n_patches = grid.n_patches
    if len(object_scores) != n_patches or len(last_scores) != n_patches:
        raise GeometryError(
            f"score vectors must have {n_patches} entries, "
            f"got {len(object_scores)} and {len(last_scores)}"
        )
    warnings: list[str] = []
    n_eff = min(config.budget, n_patches)
    n_a = min(anchor_count(config), n_patches)

    anchors = select_anchors(object_scores, n_a)
    anchor_set = set(anchors)
    buffers = [
        b
        for b in expand_buffers(anchors, grid, config.scheme, config.boundary_mode)
        if b not in anchor_set
    ]

    if len(anchors) + len(buffers) > n_eff:
        keep = n_eff - len(anchors)
        by_score = sorted(
            buffers, key=lambda i: (-object_scores.values[i], i)
        )[:keep]
        warnings.append(
            f"anchor+buffer count {len(anchors) + len(buffers)} exceeded the "
            f"budget {n_eff}; kept the {keep} highest-scoring buffers"
        )
        buffers = sorted(by_score)

    chosen = anchor_set | set(buffers)
    registers = select_registers(last_scores, chosen, n_eff - len(chosen))

    retained = anchors + buffers + registers
    return Selection(
        anchors=anchors,
        buffers=buffers,
        registers=registers,
        retained=retained,
        n_patches=n_patches,
        warnings=tuple(warnings),
    )


def prune(stack: AttentionStack, config: HiPruneConfig) -> Selection:
    """Select retained patch indices for one attention stack.

    Anchors come from ``config.object_layer``, registers from the last
    stored layer; exactly min(budget, n_patches) indices are retained.
    """
    if not (0 <= config.object_layer < stack.layers):
        raise BoundsError(
            f"object layer {config.object_layer} out of range "
            f"for {stack.layers}-layer stack"
        )
    object_scores = aggregate_scores(
        stack, config.object_layer, config.include_cls_queries
    )
    last_scores = aggregate_scores(
        stack, stack.layers - 1, config.include_cls_queries
    )
    return prune_scores(object_scores, last_scores, stack.grid, config)


def gather_tokens(tokens: TokenMatrix, selection: Selection) -> TokenMatrix:
    """Rows of ``tokens`` at the retained indices, in retained order."""
    if tokens.n != selection.n_patches:
        raise GeometryError(
            f"token matrix has {tokens.n} rows but the selection "
            f"was made over {selection.n_patches} patches"
        )
    return TokenMatrix(data=tokens.data[selection.retained])


def prune_tokens(
    stack: AttentionStack, tokens: TokenMatrix, config: HiPruneConfig
) -> tuple[Selection, TokenMatrix]:
    """prune() plus the pruned token matrix in one call."""
    if tokens.n != stack.n_patches:
        raise GeometryError(
            f"token matrix has {tokens.n} rows but the stack grid "
            f"has {stack.n_patches} patches"
        )
    selection = prune(stack, config)
    return selection, gather_tokens(tokens, selection)


def apportion_budget(total: int, weights: list[int]) -> list[int]:
    """Split ``total`` across items proportionally to nonnegative ``weights``.

    Largest-remainder (Hamilton) apportionment: floor the quotas, then hand
    the leftover units to the largest fractional remainders, lower index
    first on ties.  The result always sums to ``total``.
    """
    if total < 0:
        raise ValueError(f"total must be >= 0, got {total}")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    mass = sum(weights)
    if not weights:
        return []
    if mass == 0:
        raise ValueError("at least one weight must be positive")
    quotas = [total * w / mass for w in weights]
    shares = [math.floor(q) for q in quotas]
    leftover = total - sum(shares)
    remainders = sorted(
        range(len(weights)), key=lambda i: (-(quotas[i] - shares[i]), i)
    )
    for i in remainders[:leftover]:
        shares[i] += 1
    return shares
