"""Per-layer accuracy-gain metrics.

Supported metrics, all producing a :class:`~mpq.model_io.GainVector` over the
selectable (non-fixed) layers:

* entropy of the quantized-weight histogram ("eagl"),
* per-layer fine-tuning measurements ("alps", accuracy or loss mode),
* mean Hessian trace times the squared 4-bit vs 2-bit dequantization gap
  ("hawq" proxy),
* ordinal baselines (uniform / first-to-last / last-to-first),
* linear regression coefficients.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import model_io
from .errors import (
    DuplicateLayer,
    EmptyTensor,
    InvalidField,
    MalformedManifest,
    MissingTensor,
    MissingTrace,
    NegativeGain,
)
from .model_io import GainVector, NetworkManifest, TensorEntry, parse_float_token
from .quantize import (
    ROUND_HALF_AWAY,
    QuantizedTensor,
    bin_range,
    dequantize,
    hawq_init_step,
    quantize_tensor,
)

ENTROPY_EXACT = "exact"
ENTROPY_APPENDIX_COMPAT = "appendix-compat"
#: smoothing constant added to every bin probability in appendix-compat mode
APPENDIX_SMOOTHING = 1e-10

BASELINE_KINDS = ("uniform", "first_to_last", "last_to_first")


# ---------------------------------------------------------------------------
# empirical distributions and entropy
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalDistribution:
    """Relative bin frequencies of a quantized tensor (occupied bins only)."""

    probabilities: dict[int, float]
    n: int
    precision: int

    @property
    def support_size(self) -> int:
        return len(self.probabilities)


def empirical_distribution(qt: QuantizedTensor) -> EmpiricalDistribution:
    if len(qt) == 0:
        raise EmptyTensor("cannot build a distribution from an empty tensor")
    codes, counts = np.unique(qt.bins, return_counts=True)
    n = int(len(qt))
    probabilities = {int(c): int(k) / n for c, k in zip(codes, counts)}
    return EmpiricalDistribution(probabilities=probabilities, n=n, precision=qt.precision)


def entropy_bits(dist: EmpiricalDistribution, mode: str = ENTROPY_EXACT) -> float:
    """Shannon entropy of the distribution, in bits.

    Exact mode sums -p*log2(p) over occupied bins (0*log 0 := 0).  The
    appendix-compat mode reproduces the published snippet bit-for-bit: all
    2**b bins participate (zero counts included), every probability gets a
    1e-10 additive smoothing, and the sum is not renormalized.
    """
    if mode == ENTROPY_EXACT:
        p = np.fromiter(dist.probabilities.values(), dtype=np.float64)
        p = p[p > 0.0]
        if p.size == 0:
            return 0.0
        return float(-np.sum(p * np.log2(p)))
    if mode == ENTROPY_APPENDIX_COMPAT:
        lo, _ = bin_range(dist.precision)
        px = np.zeros(2 ** dist.precision, dtype=np.float64)
        for code, prob in dist.probabilities.items():
            px[code - lo] = prob
        p = px + APPENDIX_SMOOTHING
        return float(-np.sum(p * np.log2(p)))
    raise ValueError(f"unknown entropy mode {mode!r}")


# ---------------------------------------------------------------------------
# metric inputs loaded from measurement files
# ---------------------------------------------------------------------------

MODE_ACCURACY = "accuracy"
MODE_LOSS = "loss"


@dataclass
class AlpsMeasurements:
    """Final per-layer fine-tuning measurements (accuracy percent, loss)."""

    entries: dict[str, tuple[float, float]]
    mode: str = MODE_ACCURACY


@dataclass
class HawqInputs:
    """Mean diagonal Hessian trace per layer."""

    entries: dict[str, float]


def load_alps_measurements(path, mode: str = MODE_ACCURACY) -> AlpsMeasurements:
    if mode not in (MODE_ACCURACY, MODE_LOSS):
        raise ValueError(f"unknown ALPS mode {mode!r}")
    text = model_io._read_text(path)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedManifest(f"{path}: empty measurements file") from None
    if header != ["layer", "accuracy", "loss"]:
        raise MalformedManifest(f"{path}: header must be 'layer,accuracy,loss'")
    entries: dict[str, tuple[float, float]] = {}
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != 3 or not row[0].strip():
            raise InvalidField(f"{path}:{lineno}: expected 'layer,accuracy,loss'")
        name = row[0].strip()
        if name in entries:
            raise DuplicateLayer(f"{path}:{lineno}: duplicate layer '{name}'")
        accuracy = parse_float_token(row[1], f"{path}:{lineno}")
        loss = parse_float_token(row[2], f"{path}:{lineno}")
        entries[name] = (accuracy, loss)
    return AlpsMeasurements(entries=entries, mode=mode)


def load_hawq_traces(path) -> HawqInputs:
    entries: dict[str, float] = {}
    for lineno, raw in enumerate(model_io._read_text(path).splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise InvalidField(f"{path}:{lineno}: expected 'layer<TAB>trace_avg'")
        name = parts[0].strip()
        if name in entries:
            raise DuplicateLayer(f"{path}:{lineno}: duplicate layer '{name}'")
        trace = parse_float_token(parts[1], f"{path}:{lineno}")
        if trace < 0:
            raise InvalidField(f"{path}:{lineno}: trace_avg must be >= 0, got {trace}")
        entries[name] = trace
    return HawqInputs(entries=entries)


# ---------------------------------------------------------------------------
# gain computations
# ---------------------------------------------------------------------------

def _selectable_tensor(
    layer, store: dict[str, TensorEntry]
) -> TensorEntry:
    if layer.weight_tensor is None:
        raise MissingTensor(f"layer '{layer.name}' declares no weight tensor")
    entry = store.get(layer.weight_tensor)
    if entry is None:
        raise MissingTensor(f"layer '{layer.name}': tensor '{layer.weight_tensor}' not in container")
    return entry


def eagl_gains(
    store: dict[str, TensorEntry],
    manifest: NetworkManifest,
    mode: str = ENTROPY_EXACT,
    rounding: str = ROUND_HALF_AWAY,
) -> GainVector:
    """Gain = entropy of the layer's empirical quantized-weight distribution."""
    entries: dict[str, float] = {}
    for layer in manifest.selectable_layers():
        tensor = _selectable_tensor(layer, store)
        qt = quantize_tensor(tensor.values, tensor.scale, tensor.precision, rounding=rounding)
        entries[layer.name] = entropy_bits(empirical_distribution(qt), mode=mode)
    return GainVector(metric_name=f"eagl-{mode}", entries=entries)


def alps_gains(measurements: AlpsMeasurements) -> GainVector:
    """Accuracy mode: gain = max(A) - A_l (best layer gets 0).  Loss mode:
    gain = final loss of the layer's one-epoch fine-tune."""
    if not measurements.entries:
        raise InvalidField("no ALPS measurements given")
    if measurements.mode == MODE_ACCURACY:
        best = max(acc for acc, _ in measurements.entries.values())
        entries = {name: best - acc for name, (acc, _) in measurements.entries.items()}
    else:
        entries = {name: loss for name, (_, loss) in measurements.entries.items()}
    return GainVector(metric_name=f"alps-{measurements.mode}", entries=entries)


def hawq_gains(
    traces: HawqInputs,
    store: dict[str, TensorEntry],
    manifest: NetworkManifest,
    rounding: str = ROUND_HALF_AWAY,
) -> GainVector:
    """Gain = mean Hessian trace x squared L2 gap between the 4-bit and 2-bit
    dequantized tensors, each quantized with its own range-derived step."""
    entries: dict[str, float] = {}
    for layer in manifest.selectable_layers():
        if layer.name not in traces.entries:
            raise MissingTrace(f"layer '{layer.name}' has no Hessian trace entry")
        tensor = _selectable_tensor(layer, store)
        values = tensor.values
        if values.size and np.all(values == 0.0):
            # both dequantizations are identically zero, no gap
            entries[layer.name] = 0.0
            continue
        gap = 0.0
        deq = {}
        for bits in (4, 2):
            step = hawq_init_step(values, bits)
            deq[bits] = dequantize(quantize_tensor(values, step, bits, rounding=rounding), step)
        gap = float(np.sum((deq[4] - deq[2]) ** 2))
        entries[layer.name] = traces.entries[layer.name] * gap
    return GainVector(metric_name="hawq", entries=entries)


def baseline_gains(manifest: NetworkManifest, kind: str) -> GainVector:
    """Ordinal baselines over selectable layers in topological order.

    uniform: every layer worth the same.  first_to_last: gains increase with
    depth, so the optimizer drops the earliest layers first.  last_to_first:
    the reverse.
    """
    kind = kind.replace("-", "_")
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    selectable = manifest.selectable_layers()
    if not selectable:
        raise InvalidField("manifest has no selectable layers")
    total = len(selectable)
    entries: dict[str, float] = {}
    for index, layer in enumerate(selectable):
        if kind == "uniform":
            gain = 1.0
        elif kind == "first_to_last":
            gain = float(index + 1)
        else:
            gain = float(total - index)
        entries[layer.name] = gain
    return GainVector(metric_name=f"baseline-{kind}", entries=entries)


def regression_gains(coefficients: dict[str, float]) -> GainVector:
    """Use fitted per-layer linear coefficients directly as gains."""
    entries: dict[str, float] = {}
    for name, coefficient in coefficients.items():
        value = float(coefficient)
        if value < 0:
            raise NegativeGain(
                f"layer '{name}' has negative regression coefficient {value}; "
                "shift gains explicitly if this is intended"
            )
        entries[name] = value
    return GainVector(metric_name="regression", entries=entries)
