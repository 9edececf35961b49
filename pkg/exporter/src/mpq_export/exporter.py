"""Convert a quantized training checkpoint into the planner's file formats.

The checkpoint layout mirrors common quantization-aware training code: a
``state_dict`` mapping where each quantized weight ``<key>`` is accompanied by
``<key>_scale`` (learned step size) and ``<key>_precision`` (bit-width).
Export is lossless for binary32 weights; the blob is raw little-endian
binary32, concatenated in sorted-key order for determinism.

MAC counts are only derivable from weight shapes for dense (2-D) layers; conv
and other layers get ``macs = 0`` plus a TODO marker, and the planner refuses
to plan on those zeros unless explicitly allowed.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

ALLOWED_BITS = (2, 4, 8)
SCALE_SUFFIX = "_scale"
PRECISION_SUFFIX = "_precision"


class ExportError(Exception):
    """Base class for exporter failures."""


class MissingCompanion(ExportError):
    pass


class UnsupportedDtype(ExportError):
    pass


class InvalidCompanion(ExportError):
    pass


@dataclass
class ExportManifest:
    source_path: str
    tensor_count: int
    tensors_path: str
    blob_path: str
    network_path: str


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix="." + path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _state_dict(checkpoint_path: str | Path) -> dict:
    checkpoint = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    if isinstance(checkpoint, dict) and isinstance(checkpoint.get("state_dict"), dict):
        checkpoint = checkpoint["state_dict"]
    if not isinstance(checkpoint, dict):
        raise ExportError(f"{checkpoint_path}: checkpoint is not a state dict")
    return checkpoint


def _weight_keys(state: dict) -> list[str]:
    keys = [
        key
        for key in state
        if "weight" in key and not key.endswith(SCALE_SUFFIX) and not key.endswith(PRECISION_SUFFIX)
    ]
    return sorted(keys)


def _scalar(state: dict, key: str, kind: str):
    companion = key + (SCALE_SUFFIX if kind == "scale" else PRECISION_SUFFIX)
    if companion not in state:
        raise MissingCompanion(f"weight '{key}' has no '{companion}' entry")
    value = state[companion]
    if isinstance(value, torch.Tensor):
        if value.numel() != 1:
            raise InvalidCompanion(f"'{companion}' must be a scalar, got shape {tuple(value.shape)}")
        value = value.item()
    return value


def _layer_name(key: str) -> str:
    return key[: -len(".weight")] if key.endswith(".weight") else key


def _layer_skeleton(key: str, shape: tuple[int, ...]) -> dict:
    params = int(np.prod(shape))
    entry = {
        "name": _layer_name(key),
        "macs": 0,
        "params": params,
        "input_features": int(shape[1]) if len(shape) >= 2 else int(shape[0]),
        "weight_tensor": key,
    }
    if len(shape) == 2:
        # dense layer: one MAC per weight
        entry["macs"] = params
    else:
        entry["macs_todo"] = "not derivable from weight shape; fill in from the model graph"
    return entry


def export_checkpoint(
    checkpoint_path: str | Path,
    out_prefix: str | Path,
    mark_first_last_8bit: bool = False,
) -> ExportManifest:
    """Emit ``<prefix>.tensors.json``, ``<prefix>.blob`` and ``<prefix>.network.json``."""
    state = _state_dict(checkpoint_path)
    keys = _weight_keys(state)

    container = []
    chunks = []
    layers = []
    offset = 0
    for key in keys:
        weight = state[key]
        if not isinstance(weight, torch.Tensor):
            raise UnsupportedDtype(f"weight '{key}' is not a tensor")
        if weight.dtype != torch.float32:
            raise UnsupportedDtype(f"weight '{key}' has dtype {weight.dtype}; only float32 is exportable")
        scale = float(_scalar(state, key, "scale"))
        if not scale > 0:
            raise InvalidCompanion(f"weight '{key}' has non-positive scale {scale}")
        precision = int(_scalar(state, key, "precision"))
        if precision not in ALLOWED_BITS:
            raise InvalidCompanion(f"weight '{key}' has precision {precision}; expected one of {ALLOWED_BITS}")

        array = weight.detach().cpu().contiguous().numpy()
        raw = array.astype("<f4", copy=False).tobytes()
        shape = tuple(int(d) for d in array.shape)
        container.append(
            {
                "name": key,
                "shape": list(shape),
                "offset": offset,
                "byte_length": len(raw),
                "scale": scale,
                "precision": precision,
            }
        )
        chunks.append(raw)
        offset += len(raw)
        layers.append(_layer_skeleton(key, shape))

    if mark_first_last_8bit and layers:
        layers[0]["fixed_bits"] = 8
        layers[-1]["fixed_bits"] = 8

    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    tensors_path = prefix.with_name(prefix.name + ".tensors.json")
    blob_path = prefix.with_name(prefix.name + ".blob")
    network_path = prefix.with_name(prefix.name + ".network.json")

    _atomic_write_bytes(tensors_path, (json.dumps(container, indent=2) + "\n").encode("utf-8"))
    _atomic_write_bytes(blob_path, b"".join(chunks))
    network = {"name": prefix.name, "layers": layers}
    _atomic_write_bytes(network_path, (json.dumps(network, indent=2) + "\n").encode("utf-8"))

    return ExportManifest(
        source_path=str(checkpoint_path),
        tensor_count=len(keys),
        tensors_path=str(tensors_path),
        blob_path=str(blob_path),
        network_path=str(network_path),
    )
