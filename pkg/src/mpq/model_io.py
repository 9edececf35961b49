"""Readers and writers for the planner's on-disk formats.

Formats handled here:

* network manifest -- JSON object ``{"name": ..., "layers": [...]}`` where each
  layer carries ``name``, ``macs``, ``params``, ``input_features`` and the
  optional ``link_group``, ``fixed_bits``, ``weight_tensor`` fields,
* tensor container -- a JSON array of tensor descriptors plus a raw blob of
  little-endian binary32 values, concatenated in descriptor order,
* gains file -- UTF-8 lines ``name<TAB>float``,
* run table -- CSV with a header row, flag columns and a final ``accuracy``
  column,
* precision assignment -- JSON report that round-trips exactly.

All writers go through an atomic temp-file + rename so interrupted runs never
leave a truncated artifact behind.  Numbers are parsed locale-independently
(decimal point, no digit grouping) and tensor values are widened to binary64
for all in-memory computation.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateLayer,
    InvalidField,
    IoFailure,
    MalformedManifest,
    NegativeGain,
    NonNumeric,
    NonPositiveScale,
    ShapeMismatch,
    TruncatedBlob,
    UnknownLayer,
)

ALLOWED_BITS = (2, 4, 8)
#: layers narrower than this are pinned to 4-bit unless the manifest says otherwise
MIN_SELECTABLE_INPUT_FEATURES = 128
IMPLIED_FIXED_BITS = 4

_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_float_token(token: str, where: str) -> float:
    """Parse a decimal float, rejecting NaN/inf spellings and digit grouping."""
    token = token.strip()
    if not _FLOAT_RE.match(token):
        raise NonNumeric(f"{where}: not a finite number: {token!r}")
    value = float(token)
    if not math.isfinite(value):
        raise NonNumeric(f"{where}: not a finite number: {token!r}")
    return value


# ---------------------------------------------------------------------------
# atomic file helpers
# ---------------------------------------------------------------------------

def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(dir=str(directory), prefix="." + path.name + ".", suffix=".tmp")
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
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _load_json(path: str | Path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{path}: invalid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# network manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerRecord:
    """One network layer as the planner sees it."""

    name: str
    macs: int
    params: int
    input_features: int
    link_group: str | None = None
    fixed_bits: int | None = None
    weight_tensor: str | None = None

    @property
    def effective_fixed_bits(self) -> int | None:
        """Pinned precision, if any: explicit ``fixed_bits`` wins, otherwise
        narrow layers (< 128 input features) are implicitly fixed at 4-bit."""
        if self.fixed_bits is not None:
            return self.fixed_bits
        if self.input_features < MIN_SELECTABLE_INPUT_FEATURES:
            return IMPLIED_FIXED_BITS
        return None

    @property
    def selectable(self) -> bool:
        return self.effective_fixed_bits is None


@dataclass(frozen=True)
class NetworkManifest:
    """Ordered collection of layers; order is the network's topological order."""

    name: str
    layers: tuple[LayerRecord, ...]

    def layer_names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def selectable_layers(self) -> list[LayerRecord]:
        return [layer for layer in self.layers if layer.selectable]

    def __contains__(self, name: str) -> bool:
        return any(layer.name == name for layer in self.layers)


def _int_field(owner: str, obj: dict, key: str, minimum: int) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidField(f"layer '{owner}': {key} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidField(f"layer '{owner}': {key} must be >= {minimum}, got {value}")
    return value


def _layer_from_obj(obj) -> LayerRecord:
    if not isinstance(obj, dict):
        raise MalformedManifest(f"layer entry is not an object: {obj!r}")
    for key in ("name", "macs", "params", "input_features"):
        if key not in obj:
            raise MalformedManifest(f"layer entry missing required field '{key}'")
    name = obj["name"]
    if not isinstance(name, str):
        raise MalformedManifest(f"layer name must be a string, got {name!r}")
    if not name:
        raise InvalidField("layer name must be non-empty")

    link_group = obj.get("link_group")
    if link_group is not None and (not isinstance(link_group, str) or not link_group):
        raise InvalidField(f"layer '{name}': link_group must be a non-empty string")

    fixed_bits = obj.get("fixed_bits")
    if fixed_bits is not None:
        if isinstance(fixed_bits, bool) or not isinstance(fixed_bits, int) or fixed_bits not in ALLOWED_BITS:
            raise InvalidField(f"layer '{name}': fixed_bits must be one of {ALLOWED_BITS}, got {fixed_bits!r}")

    weight_tensor = obj.get("weight_tensor")
    if weight_tensor is not None and (not isinstance(weight_tensor, str) or not weight_tensor):
        raise InvalidField(f"layer '{name}': weight_tensor must be a non-empty string")

    return LayerRecord(
        name=name,
        macs=_int_field(name, obj, "macs", minimum=0),
        params=_int_field(name, obj, "params", minimum=0),
        input_features=_int_field(name, obj, "input_features", minimum=1),
        link_group=link_group,
        fixed_bits=fixed_bits,
        weight_tensor=weight_tensor,
    )


def load_manifest(path: str | Path) -> NetworkManifest:
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise MalformedManifest(f"{path}: manifest must be a JSON object")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise MalformedManifest(f"{path}: 'name' must be a string")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise MalformedManifest(f"{path}: 'layers' must be a list")
    layers = [_layer_from_obj(obj) for obj in raw_layers]
    seen: set[str] = set()
    for layer in layers:
        if layer.name in seen:
            raise DuplicateLayer(f"duplicate layer '{layer.name}'")
        seen.add(layer.name)
    return NetworkManifest(name=name, layers=tuple(layers))


def write_manifest(manifest: NetworkManifest, path: str | Path) -> None:
    layers = []
    for layer in manifest.layers:
        obj = {
            "name": layer.name,
            "macs": layer.macs,
            "params": layer.params,
            "input_features": layer.input_features,
        }
        if layer.link_group is not None:
            obj["link_group"] = layer.link_group
        if layer.fixed_bits is not None:
            obj["fixed_bits"] = layer.fixed_bits
        if layer.weight_tensor is not None:
            obj["weight_tensor"] = layer.weight_tensor
        layers.append(obj)
    doc = {"name": manifest.name, "layers": layers}
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# tensor container
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TensorEntry:
    """A quantized weight tensor with its step size and precision."""

    name: str
    shape: tuple[int, ...]
    values: np.ndarray  # float64 in memory, binary32 on disk
    scale: float
    precision: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorEntry):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.scale == other.scale
            and self.precision == other.precision
            and np.array_equal(self.values, other.values)
        )


def _container_entry(obj, blob: bytes) -> TensorEntry:
    if not isinstance(obj, dict):
        raise MalformedManifest(f"container entry is not an object: {obj!r}")
    for key in ("name", "shape", "offset", "byte_length", "scale", "precision"):
        if key not in obj:
            raise MalformedManifest(f"container entry missing required field '{key}'")
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise MalformedManifest(f"container entry has invalid name: {name!r}")

    shape = obj["shape"]
    if (
        not isinstance(shape, list)
        or not shape
        or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in shape)
    ):
        raise MalformedManifest(f"tensor '{name}': shape must be a non-empty list of positive integers")
    count = int(np.prod(shape, dtype=np.int64))

    offset = obj["offset"]
    byte_length = obj["byte_length"]
    for label, v in (("offset", offset), ("byte_length", byte_length)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise MalformedManifest(f"tensor '{name}': {label} must be a non-negative integer")
    if byte_length != 4 * count:
        raise ShapeMismatch(
            f"tensor '{name}': shape {shape} needs {4 * count} bytes but byte_length is {byte_length}"
        )
    if offset + byte_length > len(blob):
        raise TruncatedBlob(
            f"tensor '{name}': range [{offset}, {offset + byte_length}) exceeds blob of {len(blob)} bytes"
        )

    scale = obj["scale"]
    if isinstance(scale, bool) or not isinstance(scale, (int, float)) or not math.isfinite(scale):
        raise MalformedManifest(f"tensor '{name}': scale must be a finite number")
    if scale <= 0:
        raise NonPositiveScale(f"tensor '{name}': scale must be > 0, got {scale}")

    precision = obj["precision"]
    if isinstance(precision, bool) or not isinstance(precision, int) or precision not in ALLOWED_BITS:
        raise InvalidField(f"tensor '{name}': precision must be one of {ALLOWED_BITS}, got {precision!r}")

    values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidField(f"tensor '{name}' contains non-finite values")
    return TensorEntry(name=name, shape=tuple(shape), values=values, scale=float(scale), precision=precision)


def load_tensor_container(manifest_path: str | Path, blob_path: str | Path) -> dict[str, TensorEntry]:
    doc = _load_json(manifest_path)
    if not isinstance(doc, list):
        raise MalformedManifest(f"{manifest_path}: container manifest must be a JSON array")
    blob = _read_bytes(blob_path)
    entries: dict[str, TensorEntry] = {}
    for obj in doc:
        entry = _container_entry(obj, blob)
        if entry.name in entries:
            raise MalformedManifest(f"duplicate tensor '{entry.name}' in container manifest")
        entries[entry.name] = entry
    return entries


def write_tensor_container(
    entries, manifest_path: str | Path, blob_path: str | Path
) -> None:
    """Write tensors (mapping or iterable of TensorEntry) in the given order."""
    if isinstance(entries, dict):
        entries = list(entries.values())
    manifest = []
    chunks = []
    offset = 0
    for entry in entries:
        raw = np.ascontiguousarray(entry.values, dtype="<f4").tobytes()
        manifest.append(
            {
                "name": entry.name,
                "shape": list(entry.shape),
                "offset": offset,
                "byte_length": len(raw),
                "scale": float(entry.scale),
                "precision": int(entry.precision),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
    atomic_write_bytes(blob_path, b"".join(chunks))


# ---------------------------------------------------------------------------
# gains files
# ---------------------------------------------------------------------------

@dataclass
class GainVector:
    """Per-layer accuracy-gain estimates under a named metric."""

    metric_name: str
    entries: dict[str, float] = field(default_factory=dict)


def load_gains(
    path: str | Path,
    manifest: NetworkManifest | None = None,
    allow_negative: bool = False,
    metric_name: str | None = None,
) -> GainVector:
    entries: dict[str, float] = {}
    for lineno, raw in enumerate(_read_text(path).splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise InvalidField(f"{path}:{lineno}: expected 'name<TAB>value'")
        name = parts[0].strip()
        value = parse_float_token(parts[1], f"{path}:{lineno}")
        if value < 0 and not allow_negative:
            raise NegativeGain(f"{path}:{lineno}: layer '{name}' has negative gain {value}")
        if name in entries:
            raise DuplicateLayer(f"{path}:{lineno}: duplicate layer '{name}'")
        if manifest is not None and name not in manifest:
            raise UnknownLayer(f"{path}:{lineno}: layer '{name}' not in manifest")
        entries[name] = value
    return GainVector(metric_name=metric_name or Path(path).stem, entries=entries)


def write_gains(gains: GainVector, path: str | Path) -> None:
    lines = [f"{name}\t{float(value)!r}" for name, value in gains.entries.items()]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# run tables
# ---------------------------------------------------------------------------

@dataclass
class RunTable:
    """Mixed-precision training runs: binary flags (0 -> 2-bit, 1 -> 4-bit)
    per column plus the measured accuracy."""

    column_names: tuple[str, ...]
    rows: list[tuple[tuple[int, ...], float]]


def load_run_table(path: str | Path) -> RunTable:
    text = _read_text(path)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedManifest(f"{path}: empty run table") from None
    header = [h.strip() for h in header]
    if len(header) < 2 or header[-1] != "accuracy":
        raise MalformedManifest(f"{path}: header must be 'p_1,...,p_L,accuracy'")
    columns = tuple(header[:-1])
    rows: list[tuple[tuple[int, ...], float]] = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(header):
            raise InvalidField(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        flags = []
        for col, tok in zip(columns, row[:-1]):
            tok = tok.strip()
            if tok not in ("0", "1"):
                raise InvalidField(f"{path}:{lineno}: flag '{col}' must be 0 or 1, got {tok!r}")
            flags.append(int(tok))
        accuracy = parse_float_token(row[-1], f"{path}:{lineno}")
        rows.append((tuple(flags), accuracy))
    return RunTable(column_names=columns, rows=rows)


def write_run_table(table: RunTable, path: str | Path) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(table.column_names) + ["accuracy"])
    for flags, accuracy in table.rows:
        writer.writerow([*flags, repr(float(accuracy))])
    atomic_write_text(path, out.getvalue())


# ---------------------------------------------------------------------------
# precision assignments
# ---------------------------------------------------------------------------

def write_assignment(assignment, path: str | Path) -> None:
    """Serialize a PrecisionAssignment; layer order is preserved as given."""
    doc = {
        "network": assignment.network,
        "budget": {
            "fraction": assignment.budget.fraction,
            "capacity_bmacs": assignment.budget.capacity_bmacs,
        },
        "objective": assignment.objective,
        "total_cost_bmacs": assignment.total_cost,
        "compression_ratio": assignment.compression_ratio,
        "selected_items": list(assignment.selected_items),
        "layers": [{"name": name, "bits": bits} for name, bits in assignment.bits_per_layer.items()],
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_assignment(path: str | Path):
    from .cost import BudgetSpec
    from .knapsack import PrecisionAssignment

    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise MalformedManifest(f"{path}: assignment must be a JSON object")
    try:
        budget = BudgetSpec(
            fraction=float(doc["budget"]["fraction"]),
            capacity_bmacs=int(doc["budget"]["capacity_bmacs"]),
        )
        bits_per_layer = {}
        for obj in doc["layers"]:
            name = obj["name"]
            bits = obj["bits"]
            if name in bits_per_layer:
                raise DuplicateLayer(f"{path}: duplicate layer '{name}'")
            if isinstance(bits, bool) or not isinstance(bits, int) or bits not in ALLOWED_BITS:
                raise InvalidField(f"{path}: layer '{name}': bits must be one of {ALLOWED_BITS}")
            bits_per_layer[name] = bits
        ratio = doc["compression_ratio"]
        return PrecisionAssignment(
            bits_per_layer=bits_per_layer,
            selected_items=tuple(doc["selected_items"]),
            total_cost=int(doc["total_cost_bmacs"]),
            objective=int(doc["objective"]),
            budget=budget,
            compression_ratio=None if ratio is None else float(ratio),
            network=str(doc.get("network", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedManifest(f"{path}: malformed assignment: {exc}") from exc
