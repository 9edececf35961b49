"""Additivity checks, the linear accuracy model, and budget-sweep frontiers.

The additivity report compares measured two-layer accuracy drops against the
sum of the single-layer drops.  The regression model fits accuracy on binary
precision flags (with intercept) by least squares and reports Pearson r on a
seeded train/holdout split.  A sweep solves one knapsack per budget fraction
and returns the budget-objective frontier.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import model_io
from .cost import BudgetSpec, SelectableItem, budget_capacity, compression_ratio
from .errors import (
    DegenerateDesign,
    InvalidField,
    LengthMismatch,
    MalformedManifest,
    UnknownLayer,
    ZeroVariance,
)
from .knapsack import (
    Integerization,
    PrecisionAssignment,
    assignment_from_selection,
    integerize_gains,
    select_all,
    solve_01,
)
from .model_io import NetworkManifest, RunTable, parse_float_token

#: budget-fraction grid used by default for frontier sweeps
DEFAULT_FRACTIONS = (0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60)


def pearson_r(x, y) -> float:
    """Pearson correlation; requires two series of equal length with nonzero
    variance (affine-invariant by construction)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"series lengths differ: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ZeroVariance("need at least two points to correlate")
    xm = x - x.mean()
    ym = y - y.mean()
    sx = float(np.sum(xm * xm))
    sy = float(np.sum(ym * ym))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("a series with zero variance has no correlation")
    return float(np.sum(xm * ym) / np.sqrt(sx * sy))


# ---------------------------------------------------------------------------
# additivity of per-layer accuracy drops
# ---------------------------------------------------------------------------

@dataclass
class AdditivityReport:
    pairs: list[tuple[str, str, float, float]]  # (layer1, layer2, predicted, measured)
    pearson_r: float


def additivity_report(
    singles: dict[str, float],
    pair_measurements: list[tuple[str, str, float]],
) -> AdditivityReport:
    """Predict each pair's drop as the sum of its single-layer drops and
    correlate predictions with the measurements."""
    pairs: list[tuple[str, str, float, float]] = []
    for layer1, layer2, measured in pair_measurements:
        for name in (layer1, layer2):
            if name not in singles:
                raise UnknownLayer(f"pair references unknown layer '{name}'")
        pairs.append((layer1, layer2, singles[layer1] + singles[layer2], float(measured)))
    r = pearson_r([p[2] for p in pairs], [p[3] for p in pairs])
    return AdditivityReport(pairs=pairs, pearson_r=r)


def load_singles(path) -> dict[str, float]:
    """Read a 'layer<TAB>drop' file."""
    singles: dict[str, float] = {}
    for lineno, raw in enumerate(model_io._read_text(path).splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise InvalidField(f"{path}:{lineno}: expected 'layer<TAB>drop'")
        singles[parts[0].strip()] = parse_float_token(parts[1], f"{path}:{lineno}")
    return singles


def load_pairs(path) -> list[tuple[str, str, float]]:
    """Read a 'layer1,layer2,measured_drop' CSV (header row required)."""
    text = model_io._read_text(path)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedManifest(f"{path}: empty pairs file") from None
    if header != ["layer1", "layer2", "measured_drop"]:
        raise MalformedManifest(f"{path}: header must be 'layer1,layer2,measured_drop'")
    pairs: list[tuple[str, str, float]] = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != 3 or not row[0].strip() or not row[1].strip():
            raise InvalidField(f"{path}:{lineno}: expected 'layer1,layer2,measured_drop'")
        pairs.append((row[0].strip(), row[1].strip(), parse_float_token(row[2], f"{path}:{lineno}")))
    return pairs


# ---------------------------------------------------------------------------
# linear accuracy model over precision flags
# ---------------------------------------------------------------------------

@dataclass
class RegressionModel:
    intercept: float
    column_names: tuple[str, ...]
    coefficients: dict[str, float]
    r_train: float
    r_holdout: float
    split_seed: int


def fit_linear(runs: RunTable, holdout_fraction: float = 0.1, seed: int = 0) -> RegressionModel:
    """Least-squares fit of accuracy on precision flags, with intercept.

    Rows are shuffled with the given seed, then split; lstsq (orthogonal
    decomposition, minimum-norm on rank deficiency) does the fitting.  The
    holdout r is NaN when the holdout split is too small to correlate.
    """
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in [0, 1), got {holdout_fraction}")
    n = len(runs.rows)
    if n == 0:
        raise DegenerateDesign("run table has no rows")
    distinct = {(flags, acc) for flags, acc in runs.rows}
    if len(distinct) == 1:
        raise DegenerateDesign("all run-table rows are identical")

    flags = np.array([row[0] for row in runs.rows], dtype=np.float64)
    accuracy = np.array([row[1] for row in runs.rows], dtype=np.float64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_holdout = min(int(round(n * holdout_fraction)), n - 1)
    holdout_idx = order[:n_holdout]
    train_idx = order[n_holdout:]

    design = np.hstack([np.ones((n, 1)), flags])
    theta, *_ = np.linalg.lstsq(design[train_idx], accuracy[train_idx], rcond=None)

    def _split_r(idx: np.ndarray) -> float:
        if len(idx) < 2:
            return float("nan")
        return pearson_r(design[idx] @ theta, accuracy[idx])

    coefficients = {name: float(c) for name, c in zip(runs.column_names, theta[1:])}
    return RegressionModel(
        intercept=float(theta[0]),
        column_names=runs.column_names,
        coefficients=coefficients,
        r_train=_split_r(train_idx),
        r_holdout=_split_r(holdout_idx),
        split_seed=seed,
    )


def predict_accuracy(model: RegressionModel, flags) -> float:
    flags = list(flags)
    if len(flags) != len(model.column_names):
        raise LengthMismatch(
            f"flag vector has {len(flags)} entries, model has {len(model.column_names)} coefficients"
        )
    total = model.intercept
    for name, flag in zip(model.column_names, flags):
        total += model.coefficients[name] * flag
    return float(total)


# ---------------------------------------------------------------------------
# budget sweeps
# ---------------------------------------------------------------------------

@dataclass
class FrontierPoint:
    fraction: float
    assignment: PrecisionAssignment
    objective_real: float  # sum of real (pre-integerization) gains of selected items
    total_cost: int


def solve_fraction(
    manifest: NetworkManifest,
    items: list[SelectableItem],
    integerization: Integerization,
    fraction: float,
) -> FrontierPoint:
    """Solve a single budget point and expand it into a full assignment."""
    cap = budget_capacity(items, fraction)
    if cap.select_all:
        selection = select_all(integerization.items)
    else:
        selection = solve_01(integerization.items, cap.capacity_weight)
    budget = BudgetSpec(fraction=fraction, capacity_bmacs=cap.capacity_weight)
    assignment = assignment_from_selection(selection, items, manifest, budget)
    assignment.compression_ratio = compression_ratio(manifest, assignment)
    chosen = set(selection.ids)
    objective_real = float(sum(item.gain for item in items if item.id in chosen))
    return FrontierPoint(
        fraction=fraction,
        assignment=assignment,
        objective_real=objective_real,
        total_cost=assignment.total_cost,
    )


def sweep(
    manifest: NetworkManifest,
    items: list[SelectableItem],
    fractions=DEFAULT_FRACTIONS,
) -> list[FrontierPoint]:
    """Solve every budget fraction; result is sorted by fraction descending."""
    integerization = integerize_gains(items)
    points = [solve_fraction(manifest, items, integerization, f) for f in fractions]
    points.sort(key=lambda p: -p.fraction)
    return points
