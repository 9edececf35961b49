"""Shared fixture builders for the test suite."""

import numpy as np

from mpq.model_io import (
    LayerRecord,
    NetworkManifest,
    TensorEntry,
    write_gains,
    write_manifest,
    write_tensor_container,
)
from mpq.model_io import GainVector


def layer(
    name,
    macs=100,
    params=100,
    input_features=256,
    link_group=None,
    fixed_bits=None,
    weight_tensor=None,
):
    return LayerRecord(
        name=name,
        macs=macs,
        params=params,
        input_features=input_features,
        link_group=link_group,
        fixed_bits=fixed_bits,
        weight_tensor=weight_tensor,
    )


def manifest(*layers, name="net"):
    return NetworkManifest(name=name, layers=tuple(layers))


def tensor(name, values, scale=1.0, precision=4, shape=None):
    values = np.asarray(values, dtype=np.float64)
    return TensorEntry(
        name=name,
        shape=shape or (len(values),),
        values=values,
        scale=scale,
        precision=precision,
    )


def write_net(tmp_path, man, filename="network.json"):
    path = tmp_path / filename
    write_manifest(man, path)
    return path


def write_store(tmp_path, entries, prefix="model"):
    manifest_path = tmp_path / f"{prefix}.tensors.json"
    blob_path = tmp_path / f"{prefix}.blob"
    write_tensor_container(entries, manifest_path, blob_path)
    return manifest_path, blob_path


def write_gain_file(tmp_path, entries, filename="gains.tsv"):
    path = tmp_path / filename
    write_gains(GainVector(metric_name="test", entries=dict(entries)), path)
    return path


def random_manifest_and_gains(rng, n_layers=None, max_macs=10**6):
    """A random all-selectable manifest plus positive gains, for solver tests."""
    if n_layers is None:
        n_layers = int(rng.integers(1, 13))
    layers = []
    gains = {}
    for i in range(n_layers):
        name = f"layer{i}"
        layers.append(layer(name, macs=int(rng.integers(1, max_macs + 1)), params=int(rng.integers(1, 1000))))
        gains[name] = float(1.0 - rng.random())
    return manifest(*layers), GainVector(metric_name="random", entries=gains)


# ---------------------------------------------------------------------------
# independent oracles (transcriptions kept separate from the library path)
# ---------------------------------------------------------------------------

def snippet_entropy(codes, precision):
    """Line-by-line transcription of the published histogram-entropy snippet:
    shift codes to non-negative, bincount over all 2**b bins, add 1e-10 to
    every probability, sum -p*log2(p) without renormalizing."""
    codes = np.asarray(codes, dtype=np.int64)
    layer_min = -(2 ** (precision - 1))
    newval = codes + (-layer_min)
    px = np.bincount(newval, minlength=2**precision).astype(np.float64) / len(codes)
    p = px + 1e-10
    return float(-sum(p[i] * np.log2(p[i]) for i in range(len(p))))


def synthetic_run_table(rng, n_rows, n_cols, intercept, coefficients, noise_sd=0.0):
    """Stratified run-table generator: k randomly chosen columns at flag 0 in
    an otherwise all-ones row, accuracy = intercept + sum(c * flag) + noise."""
    from mpq.model_io import RunTable

    rows = []
    sizes = np.linspace(2, max(2, n_cols - 2), n_rows).round().astype(int)
    for k in sizes:
        flags = np.ones(n_cols, dtype=int)
        flags[rng.choice(n_cols, size=min(int(k), n_cols), replace=False)] = 0
        accuracy = intercept + float(np.dot(coefficients, flags))
        if noise_sd:
            accuracy += float(rng.normal(0.0, noise_sd))
        rows.append((tuple(int(f) for f in flags), accuracy))
    names = tuple(f"p_{i + 1}" for i in range(n_cols))
    return RunTable(column_names=names, rows=rows)


def real_subset_optimum(gains, weights, capacity):
    """Exhaustive real-valued knapsack optimum (independent of the DP path)."""
    subset_gains = np.zeros(1, dtype=np.float64)
    subset_weights = np.zeros(1, dtype=np.int64)
    for g, w in zip(gains, weights):
        subset_gains = np.concatenate([subset_gains, subset_gains + g])
        subset_weights = np.concatenate([subset_weights, subset_weights + w])
    return float(subset_gains[subset_weights <= capacity].max())
