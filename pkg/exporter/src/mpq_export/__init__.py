"""Checkpoint exporter for the mixed-precision planner.

Reads a training checkpoint whose quantized weight tensors carry ``_scale``
and ``_precision`` companion entries and emits the planner's portable files:
``<prefix>.tensors.json`` + ``<prefix>.blob`` (tensor container) and
``<prefix>.network.json`` (skeleton network manifest).
"""

from .exporter import (
    ExportError,
    ExportManifest,
    InvalidCompanion,
    MissingCompanion,
    UnsupportedDtype,
    export_checkpoint,
)

__version__ = "0.1.0"
