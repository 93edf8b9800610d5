"""Byte-level encoders for the ATNS and TOKM containers.

These mirror the published little-endian layouts so exported files are
readable by any consumer of the formats; the writer is deliberately
self-contained rather than importing the pruning engine.

ATNS: magic ``ATNS``, u32 version = 1, u32 layers, u32 heads, u32 n_total,
u16 rows, u16 cols, u8 cls_count, u8 reserved = 0, then
layers*heads*n_total*n_total float32 in [layer][head][query][key] order.

TOKM: magic ``TOKM``, u32 n, u32 dim, u32 reserved = 0, then n*dim float32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

ATNS_HEADER = struct.Struct("<4sIIIIHHBB")
TOKM_HEADER = struct.Struct("<4sIII")


def write_atns(
    path: str | Path,
    data: np.ndarray,
    rows: int,
    cols: int,
    cls_count: int,
) -> None:
    """Write [layers, heads, n_total, n_total] float32 attention to ``path``."""
    if data.ndim != 4 or data.shape[2] != data.shape[3]:
        raise ValueError(f"attention must be [L, H, N, N], got {data.shape}")
    layers, heads, n_total, _ = data.shape
    if rows * cols != n_total - cls_count:
        raise ValueError(
            f"grid {rows}x{cols} with cls_count={cls_count} "
            f"does not match n_total={n_total}"
        )
    header = ATNS_HEADER.pack(b"ATNS", 1, layers, heads, n_total, rows, cols,
                              cls_count, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def write_tokm(path: str | Path, tokens: np.ndarray) -> None:
    """Write an [n, dim] float32 token matrix to ``path``."""
    if tokens.ndim != 2:
        raise ValueError(f"token matrix must be 2-D, got {tokens.ndim}-D")
    n, dim = tokens.shape
    with open(path, "wb") as fh:
        fh.write(TOKM_HEADER.pack(b"TOKM", n, dim, 0))
        fh.write(np.ascontiguousarray(tokens, dtype="<f4").tobytes())
