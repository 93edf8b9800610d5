"""Diagnostics over attention stacks: object IoU, dispersion, layer phases.

These metrics describe where high-attention tokens sit on the patch grid:
IoU against an object segmentation mask quantifies object alignment per
layer, the dispersion curve (mean pairwise distance of top tokens) exposes
the shallow / middle / deep phase structure of an encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, GeometryError
from .scoring import ScoreVector, aggregate_scores
from .store import AttentionStack, TokenGrid

DEFAULT_FRACTION = 0.1

# encoder depth -> object layer used by the stock configurations
OBJECT_LAYER_PRESETS = {24: 9, 32: 16}


@dataclass(frozen=True)
class SegMask:
    """Boolean object mask over a patch grid (true = object patch)."""

    grid: TokenGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=bool))
        if self.values.shape != (self.grid.n_patches,):
            raise GeometryError(
                f"mask has {self.values.shape} values, "
                f"expected ({self.grid.n_patches},) for a "
                f"{self.grid.rows}x{self.grid.cols} grid"
            )


@dataclass(frozen=True)
class LayerPartition:
    """Contiguous shallow / middle / deep layer ranges covering [0, L)."""

    shallow: range
    middle: range
    deep: range

    def __post_init__(self) -> None:
        ok = (
            self.shallow.start == 0
            and self.shallow.stop == self.middle.start
            and self.middle.stop == self.deep.start
        )
        if not ok:
            raise ValueError(
                f"ranges must be contiguous and ordered, got "
                f"{self.shallow}, {self.middle}, {self.deep}"
            )

    @property
    def layer_count(self) -> int:
        return self.deep.stop


def _check_fraction(fraction: float) -> None:
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")


def top_fraction_indices(scores: ScoreVector, fraction: float) -> list[int]:
    """The ceil(fraction * n) highest-scoring indices, ascending.

    Ties break toward lower indices, matching the selection pipeline.
    """
    _check_fraction(fraction)
    n = len(scores)
    # the epsilon absorbs float noise in fraction * n when the product is integral
    k = min(n, max(1, math.ceil(fraction * n - 1e-9)))
    top = np.argsort(-scores.values, kind="stable")[:k]
    return sorted(int(i) for i in top)


def iou_with_mask(scores: ScoreVector, mask: SegMask, fraction: float) -> float:
    """Intersection over union of the top-scoring token set and the mask."""
    if len(scores) != mask.grid.n_patches:
        raise GeometryError(
            f"scores cover {len(scores)} patches but the mask grid has "
            f"{mask.grid.n_patches}"
        )
    selected = set(top_fraction_indices(scores, fraction))
    masked = set(int(i) for i in np.flatnonzero(mask.values))
    union = selected | masked
    if not union:
        return 0.0
    return len(selected & masked) / len(union)


def normalized_layer_iou(
    stack: AttentionStack,
    mask: SegMask,
    layers: list[int],
    fraction: float = DEFAULT_FRACTION,
    include_cls_queries: bool = True,
) -> list[float | None]:
    """Per-layer mask IoU divided by the mid-layer (floor(L/2)) value.

    The mid layer must be among ``layers``; its entry is exactly 1 whenever
    its raw IoU is nonzero.  A zero mid-layer IoU makes every ratio
    undefined, reported as None.
    """
    if not layers:
        raise ValueError("need at least one layer")
    mid = stack.layers // 2
    if mid not in layers:
        raise ValueError(f"mid layer {mid} must be included in {layers}")
    raw = [
        iou_with_mask(aggregate_scores(stack, layer, include_cls_queries), mask, fraction)
        for layer in layers
    ]
    mid_value = raw[layers.index(mid)]
    if mid_value == 0.0:
        return [None] * len(raw)
    return [v / mid_value for v in raw]


def dispersion(scores: ScoreVector, grid: TokenGrid, fraction: float) -> float:
    """Mean pairwise Euclidean distance, in patch units, of the top tokens.

    Fewer than two selected tokens give 0.
    """
    if len(scores) != grid.n_patches:
        raise GeometryError(
            f"scores cover {len(scores)} patches but the grid has {grid.n_patches}"
        )
    idx = top_fraction_indices(scores, fraction)
    if len(idx) < 2:
        return 0.0
    coords = np.array([divmod(i, grid.cols) for i in idx], dtype=np.float64)
    diffs = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    m = len(idx)
    return float(dist.sum() / (m * (m - 1)))


def dispersion_curve(
    stack: AttentionStack,
    fraction: float = DEFAULT_FRACTION,
    include_cls_queries: bool = True,
) -> list[float]:
    """Dispersion of the aggregated scores at every layer."""
    return [
        dispersion(
            aggregate_scores(stack, layer, include_cls_queries), stack.grid, fraction
        )
        for layer in range(stack.layers)
    ]


def default_object_layer(layer_count: int) -> int:
    """Stock object layer: preset for 24- and 32-layer encoders, otherwise
    the heuristic round(3L/8) that interpolates the presets."""
    if layer_count in OBJECT_LAYER_PRESETS:
        return OBJECT_LAYER_PRESETS[layer_count]
    return int(math.floor(3 * layer_count / 8 + 0.5))


def default_partition(layer_count: int) -> LayerPartition:
    """Shallow/middle/deep split of an encoder's layers.

    Shallow covers the first ceil(L/6) layers, middle runs through the
    default object layer, deep is the rest.
    """
    if layer_count < 3:
        raise ValueError(
            f"cannot partition {layer_count} layers into three phases"
        )
    shallow_end = math.ceil(layer_count / 6)
    object_layer = default_object_layer(layer_count)
    return LayerPartition(
        shallow=range(0, shallow_end),
        middle=range(shallow_end, object_layer + 1),
        deep=range(object_layer + 1, layer_count),
    )


def read_mask(path: str | Path, grid: TokenGrid) -> SegMask:
    """Load an object mask: binary PGM (P5) or raw bytes, nonzero = object."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"P5":
        width, height, values = _parse_pgm(raw, path)
        if (height, width) != (grid.rows, grid.cols):
            raise GeometryError(
                f"{path}: PGM is {width}x{height} but the grid is "
                f"{grid.cols}x{grid.rows} (width x height)"
            )
    else:
        values = np.frombuffer(raw, dtype=np.uint8)
        if len(values) != grid.n_patches:
            raise FormatError(
                f"{path}: raw mask holds {len(values)} bytes, "
                f"expected {grid.n_patches}"
            )
    return SegMask(grid=grid, values=values != 0)


def _parse_pgm(raw: bytes, path: str | Path) -> tuple[int, int, np.ndarray]:
    """Header fields and pixel bytes of a binary (P5, maxval <= 255) PGM."""
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed PGM header near byte {start}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval > 255:
        raise FormatError(f"{path}: 16-bit PGM is not supported")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(raw[pos : pos + width * height], dtype=np.uint8)
    if len(pixels) != width * height:
        raise FormatError(f"{path}: PGM payload shorter than {width}x{height}")
    return width, height, pixels
