"""Attention-stack data model and the ATNS / TOKM binary containers.

ATNS layout (little-endian, no padding):

    offset  size  field
    0       4     magic b"ATNS"
    4       4     u32 version (= 1)
    8       4     u32 layers
    12      4     u32 heads
    16      4     u32 n_total        tokens per layer, class token included
    20      2     u16 rows           patch-grid rows
    22      2     u16 cols           patch-grid cols
    24      1     u8  cls_count      0 or 1; class token sits at index 0
    25      1     u8  reserved (= 0)
    26      ...   layers*heads*n_total*n_total float32,
                  [layer][head][query][key] order

TOKM layout (little-endian):

    offset  size  field
    0       4     magic b"TOKM"
    4       4     u32 n              token count
    8       4     u32 dim            hidden size
    12      4     u32 reserved (= 0)
    16      ...   n*dim float32, row-major

An optional sidecar ``<stem>.json`` next to an ATNS file carries free-form
provenance strings; it is never needed to decode the tensor data.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AttentionValidationError, BoundsError, FormatError, GeometryError

ATNS_MAGIC = b"ATNS"
ATNS_VERSION = 1
ATNS_HEADER = struct.Struct("<4sIIIIHHBB")

TOKM_MAGIC = b"TOKM"
TOKM_HEADER = struct.Struct("<4sIII")

ROW_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class TokenGrid:
    """Rectangular patch grid; flat index of (row, col) is row*cols + col."""

    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GeometryError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols


def patch_index_of(grid: TokenGrid, row: int, col: int) -> int:
    """Flat index of a grid cell; raises BoundsError outside the grid."""
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise BoundsError(
            f"cell ({row}, {col}) outside {grid.rows}x{grid.cols} grid"
        )
    return row * grid.cols + col


@dataclass
class AttentionStack:
    """Per-layer multi-head attention for one image.

    ``data`` has shape [layers, heads, n_total, n_total] float32 in
    [layer][head][query][key] order.  When ``cls_count`` is 1 the class
    token occupies index 0 of the query and key axes of every layer.
    """

    data: np.ndarray
    grid: TokenGrid
    cls_count: int

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise GeometryError(f"attention data must be 4-D, got {self.data.ndim}-D")
        if self.cls_count not in (0, 1):
            raise GeometryError(f"cls_count must be 0 or 1, got {self.cls_count}")
        layers, heads, n_q, n_k = self.data.shape
        if layers < 1 or heads < 1:
            raise GeometryError(f"need at least one layer and head, got {layers}x{heads}")
        if n_q != n_k:
            raise GeometryError(f"attention matrices must be square, got {n_q}x{n_k}")
        if self.grid.n_patches != n_q - self.cls_count:
            raise GeometryError(
                f"grid {self.grid.rows}x{self.grid.cols} has {self.grid.n_patches} patches "
                f"but stack carries {n_q} tokens with cls_count={self.cls_count}"
            )

    @property
    def layers(self) -> int:
        return self.data.shape[0]

    @property
    def heads(self) -> int:
        return self.data.shape[1]

    @property
    def n_total(self) -> int:
        return self.data.shape[2]

    @property
    def n_patches(self) -> int:
        return self.grid.n_patches

    def validate(self, tolerance: float = ROW_SUM_TOLERANCE) -> None:
        """Check value range and row-stochasticity of every attention row.

        The first offending (layer, head, query) row is named in the error.
        """
        d = self.data
        in_range = (d >= 0.0) & (d <= 1.0)
        if not bool(in_range.all()):
            layer, head, query, key = np.unravel_index(
                int(np.argmin(in_range)), d.shape
            )
            raise AttentionValidationError(
                f"entry out of [0, 1] at (layer {layer}, head {head}, "
                f"query {query}, key {key}): {d[layer, head, query, key]!r}"
            )
        sums = d.sum(axis=3, dtype=np.float64)
        bad = np.abs(sums - 1.0) > tolerance
        if bool(bad.any()):
            layer, head, query = np.unravel_index(int(np.argmax(bad)), sums.shape)
            raise AttentionValidationError(
                f"attention row sums to {sums[layer, head, query]:.6f} "
                f"(expected 1 within {tolerance}) at "
                f"(layer {layer}, head {head}, query {query})"
            )


@dataclass
class TokenMatrix:
    """Token embeddings, shape [n, dim] float32."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise GeometryError(f"token matrix must be 2-D, got {self.data.ndim}-D")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def sidecar_path(path: str | Path) -> Path:
    """Path of the optional JSON provenance sidecar next to an ATNS file."""
    return Path(path).with_suffix(".json")


def write_stack(
    stack: AttentionStack,
    path: str | Path,
    provenance: dict[str, str] | None = None,
) -> None:
    """Encode a stack to the ATNS container; decodes bit-exactly via read_stack."""
    header = ATNS_HEADER.pack(
        ATNS_MAGIC,
        ATNS_VERSION,
        stack.layers,
        stack.heads,
        stack.n_total,
        stack.grid.rows,
        stack.grid.cols,
        stack.cls_count,
        0,
    )
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stack.data.astype("<f4", copy=False).tobytes())
    if provenance is not None:
        sidecar_path(path).write_text(
            json.dumps(provenance, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def read_stack(path: str | Path, validate: bool = True) -> AttentionStack:
    """Decode an ATNS file.

    With ``validate`` (the default) the row-sum and value-range invariants
    are enforced; geometry and header checks always run.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < ATNS_HEADER.size:
        raise FormatError(f"{path}: file too short for an ATNS header")
    magic, version, layers, heads, n_total, rows, cols, cls_count, reserved = (
        ATNS_HEADER.unpack_from(raw)
    )
    if magic != ATNS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {ATNS_MAGIC!r}")
    if version != ATNS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved byte is {reserved}, expected 0")
    if layers < 1 or heads < 1 or n_total < 1:
        raise GeometryError(
            f"{path}: layers/heads/n_total must be positive, "
            f"got {layers}/{heads}/{n_total}"
        )
    if cls_count not in (0, 1):
        raise GeometryError(f"{path}: cls_count must be 0 or 1, got {cls_count}")
    if rows * cols != n_total - cls_count:
        raise GeometryError(
            f"{path}: grid {rows}x{cols} does not match "
            f"n_total={n_total} with cls_count={cls_count}"
        )
    expected = layers * heads * n_total * n_total
    payload = raw[ATNS_HEADER.size :]
    if len(payload) != expected * 4:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"expected {expected * 4} for {layers}x{heads}x{n_total}x{n_total} float32"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(layers, heads, n_total, n_total)
    stack = AttentionStack(data=data.copy(), grid=TokenGrid(rows, cols), cls_count=cls_count)
    if validate:
        stack.validate()
    return stack


def atns_file_size(layers: int, heads: int, n_total: int) -> int:
    """Exact byte size of an ATNS file with the given geometry."""
    return ATNS_HEADER.size + layers * heads * n_total * n_total * 4


def write_tokens(tokens: TokenMatrix, path: str | Path) -> None:
    """Encode a token matrix to the TOKM container."""
    with open(path, "wb") as fh:
        fh.write(TOKM_HEADER.pack(TOKM_MAGIC, tokens.n, tokens.dim, 0))
        fh.write(tokens.data.astype("<f4", copy=False).tobytes())


def read_tokens(path: str | Path) -> TokenMatrix:
    """Decode a TOKM file."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < TOKM_HEADER.size:
        raise FormatError(f"{path}: file too short for a TOKM header")
    magic, n, dim, reserved = TOKM_HEADER.unpack_from(raw)
    if magic != TOKM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {TOKM_MAGIC!r}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved word is {reserved}, expected 0")
    payload = raw[TOKM_HEADER.size :]
    if len(payload) != n * dim * 4:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {n * dim * 4}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, dim)
    return TokenMatrix(data=data.copy())
