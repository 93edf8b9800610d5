"""Synthetic attention stacks with plantable structure, plus a brute-force
selection oracle.

The generator drives all randomness through SplitMix64 (Steele, Lea &
Flood 2014), a 64-bit mixer with a fully specified bit-stream, so fixtures
are reproducible from a seed alone in any language:

    out_i = mix(seed + i * 0x9E3779B97F4A7C15)        (wrapping, i >= 1)
    mix(z): z ^= z >> 30; z *= 0xBF58476D1ED4ECE5;
            z ^= z >> 27; z *= 0x94D049BB133111EB;
            z ^= z >> 31
    uniform_i = (out_i >> 11) * 2^-53                 in [0, 1)

Planted structure: attention weights start as uniforms in [0, 1); inside
the chosen object layers every key column of the planted block is boosted
by ``object_gain`` before row normalization.  With a gain of at least 4
every block column's aggregate score strictly exceeds every non-block
column's (per query row the boosted weight is at least ``gain`` while any
other weight is below 1, and row normalization preserves the ratio), so
rank-based consumers see the block as the top tokens by a wide margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, GeometryError
from .pruner import HiPruneConfig, Selection
from .scoring import aggregate_scores
from .store import AttentionStack, TokenGrid

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1ED4ECE5
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit stream; see the module docstring for the spec."""

    def __init__(self, seed: int) -> None:
        self._seed = seed & _MASK64
        self._drawn = 0

    def next_u64(self) -> int:
        self._drawn += 1
        z = (self._seed + self._drawn * _GAMMA) & _MASK64
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def fill_u64(self, count: int) -> np.ndarray:
        """The next ``count`` outputs, computed in one vectorized pass."""
        idx = np.arange(self._drawn + 1, self._drawn + count + 1, dtype=np.uint64)
        self._drawn += count
        z = np.uint64(self._seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` float64 values uniform in [0, 1)."""
        return (self.fill_u64(count) >> np.uint64(11)) * (2.0**-53)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic stack (no class token).

    object_block is (row, col, height, width) in patch coordinates;
    object_layers is a half-open [start, stop) layer interval receiving the
    planted block.  With deep_dispersion the last layer gets an evenly
    spread set of boosted columns instead, so its top tokens sit far apart.
    """

    grid: TokenGrid
    layers: int
    heads: int
    seed: int
    object_block: tuple[int, int, int, int] | None = None
    object_layers: tuple[int, int] | None = None
    object_gain: float = 6.0
    deep_dispersion: bool = False

    def __post_init__(self) -> None:
        if self.layers < 1 or self.heads < 1:
            raise GeometryError(
                f"need at least one layer and head, got {self.layers}x{self.heads}"
            )
        if self.object_gain <= 0:
            raise ValueError(f"object_gain must be positive, got {self.object_gain}")
        if (self.object_block is None) != (self.object_layers is None):
            raise ValueError("object_block and object_layers must be set together")
        if self.object_block is not None:
            row, col, height, width = self.object_block
            if height < 1 or width < 1:
                raise GeometryError("object block must be at least 1x1")
            if not (0 <= row and row + height <= self.grid.rows):
                raise GeometryError("object block leaves the grid vertically")
            if not (0 <= col and col + width <= self.grid.cols):
                raise GeometryError("object block leaves the grid horizontally")
        if self.object_layers is not None:
            start, stop = self.object_layers
            if not (0 <= start < stop <= self.layers):
                raise BoundsError(
                    f"object layer interval {self.object_layers} not inside "
                    f"[0, {self.layers})"
                )

    def block_indices(self) -> list[int]:
        """Flat patch indices covered by the planted block."""
        if self.object_block is None:
            return []
        row, col, height, width = self.object_block
        return [
            (row + r) * self.grid.cols + (col + c)
            for r in range(height)
            for c in range(width)
        ]


def spread_indices(n: int, count: int) -> list[int]:
    """``count`` distinct flat indices spread evenly over [0, n)."""
    if count > n:
        raise BoundsError(f"cannot spread {count} indices over {n} positions")
    if count <= 1:
        return [0] if count == 1 else []
    # round(i * (n-1) / (count-1)) in pure integer arithmetic, half up
    step_num, step_den = n - 1, count - 1
    return [(2 * i * step_num + step_den) // (2 * step_den) for i in range(count)]


def softmax_attention(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of [heads, n, n] logits, stabilized by max-subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 3 or logits.shape[1] != logits.shape[2]:
        raise GeometryError(f"logits must be [heads, n, n], got {logits.shape}")
    if not np.isfinite(logits).all():
        raise ValueError("logits must be finite")
    shifted = logits - logits.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=2, keepdims=True)


def generate(spec: SynthSpec) -> AttentionStack:
    """Deterministic synthetic stack; same seed gives bit-identical output."""
    n = spec.grid.n_patches
    stream = SplitMix64(spec.seed)
    block = spec.block_indices()
    deep_cols: list[int] = []
    if spec.deep_dispersion:
        deep_cols = spread_indices(n, max(2, math.ceil(0.1 * n)) if n >= 2 else n)

    data = np.empty((spec.layers, spec.heads, n, n), dtype=np.float32)
    for layer in range(spec.layers):
        planted: list[int] = []
        if spec.object_layers is not None:
            start, stop = spec.object_layers
            if start <= layer < stop:
                planted = block
        if not planted and spec.deep_dispersion and layer == spec.layers - 1:
            planted = deep_cols
        for head in range(spec.heads):
            weights = stream.uniforms(n * n).reshape(n, n)
            if planted:
                weights[:, planted] += spec.object_gain
            data[layer, head] = weights / weights.sum(axis=1, keepdims=True)
    return AttentionStack(data=data, grid=spec.grid, cls_count=0)


def spec_from_dict(obj: dict) -> SynthSpec:
    """Build a SynthSpec from its JSON representation."""
    block = obj.get("object_block")
    layers_interval = obj.get("object_layers")
    return SynthSpec(
        grid=TokenGrid(int(obj["rows"]), int(obj["cols"])),
        layers=int(obj["layers"]),
        heads=int(obj["heads"]),
        seed=int(obj["seed"]),
        object_block=tuple(int(v) for v in block) if block is not None else None,
        object_layers=(
            tuple(int(v) for v in layers_interval)
            if layers_interval is not None
            else None
        ),
        object_gain=float(obj.get("object_gain", 6.0)),
        deep_dispersion=bool(obj.get("deep_dispersion", False)),
    )


# --- brute-force selection oracle ------------------------------------------
#
# Everything below re-derives the selection by exhaustive comparison
# counting and literal neighbour enumeration.  It shares nothing with the
# argsort-based code in pruner.py beyond the score definition, and exists
# purely as an independent route for equivalence testing.


def _outranks(score_a: float, idx_a: int, score_b: float, idx_b: int) -> bool:
    """Does token a strictly precede token b (higher score, lower index on ties)?"""
    return score_a > score_b or (score_a == score_b and idx_a < idx_b)


def _count_top(scores: list[float], limit: int, eligible: set[int]) -> list[int]:
    """Indices whose number of outranking eligible tokens is below ``limit``."""
    picked = []
    for i in eligible:
        ahead = 0
        for j in eligible:
            if j != i and _outranks(scores[j], j, scores[i], i):
                ahead += 1
        if ahead < limit:
            picked.append(i)
    return sorted(picked)


def _oracle_neighbours(
    anchors: list[int], grid: TokenGrid, scheme: str, boundary_mode: str
) -> set[int]:
    if scheme == "cross4":
        deltas = [(0, -1), (0, 1), (-1, 0), (1, 0)]
    elif scheme == "square8":
        deltas = [
            (-1, -1), (-1, 0), (-1, 1),
            (0, -1), (0, 1),
            (1, -1), (1, 0), (1, 1),
        ]
    elif scheme == "row2":
        deltas = [(0, -1), (0, 1)]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    n = grid.rows * grid.cols
    found: set[int] = set()
    for anchor in anchors:
        for dr, dc in deltas:
            if boundary_mode == "grid_aware":
                row, col = anchor // grid.cols, anchor % grid.cols
                row2, col2 = row + dr, col + dc
                if 0 <= row2 < grid.rows and 0 <= col2 < grid.cols:
                    found.add(row2 * grid.cols + col2)
            else:
                flat = anchor + dr * grid.cols + dc
                if boundary_mode == "clamp":
                    if flat < 0:
                        flat = 0
                    if flat > n - 1:
                        flat = n - 1
                    found.add(flat)
                elif 0 <= flat < n:
                    found.add(flat)
    return found


def oracle_prune(stack: AttentionStack, config: HiPruneConfig) -> Selection:
    """Contract-identical twin of pruner.prune built from the set definitions."""
    if not (0 <= config.object_layer < stack.layers):
        raise BoundsError(
            f"object layer {config.object_layer} out of range "
            f"for {stack.layers}-layer stack"
        )
    object_scores = aggregate_scores(
        stack, config.object_layer, config.include_cls_queries
    ).values.tolist()
    last_scores = aggregate_scores(
        stack, stack.layers - 1, config.include_cls_queries
    ).values.tolist()

    n = stack.n_patches
    n_eff = min(config.budget, n)
    cluster = {"cross4": 5, "square8": 9, "row2": 3}[config.scheme]
    n_a = int(math.floor(config.alpha * config.budget / cluster + 0.5))
    if n_a > n:
        n_a = n

    everyone = set(range(n))
    anchors = _count_top(object_scores, n_a, everyone) if n_a > 0 else []
    buffers = sorted(
        _oracle_neighbours(anchors, stack.grid, config.scheme, config.boundary_mode)
        - set(anchors)
    )

    warnings: list[str] = []
    if len(anchors) + len(buffers) > n_eff:
        keep = n_eff - len(anchors)
        warnings.append(
            f"anchor+buffer count {len(anchors) + len(buffers)} exceeded the "
            f"budget {n_eff}; kept the {keep} highest-scoring buffers"
        )
        buffers = _count_top(object_scores, keep, set(buffers)) if keep > 0 else []

    taken = set(anchors) | set(buffers)
    k = n_eff - len(taken)
    registers = _count_top(last_scores, k, everyone - taken) if k > 0 else []

    return Selection(
        anchors=anchors,
        buffers=buffers,
        registers=registers,
        retained=anchors + buffers + registers,
        n_patches=n,
        warnings=tuple(warnings),
    )
