"""Attention exporter: real vision-transformer checkpoints to ATNS/TOKM."""

from .export import (
    ExportError,
    ExportResult,
    ExportSpec,
    UnsupportedModelError,
    export,
    parse_layer_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportResult",
    "ExportSpec",
    "UnsupportedModelError",
    "export",
    "parse_layer_policy",
]
