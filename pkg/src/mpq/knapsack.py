"""Exact 0-1 knapsack over integerized gains.

Real-valued gains are mapped proportionally onto integers in [1, 10000], which
bounds the total value by 10000 x L and makes a value-space dynamic program
exact and cheap even though capacities (BMAC counts) can reach 1e9+: the DP
table stores, per achievable total value, the minimum weight realizing it.

Tie-breaking is fully deterministic: maximal value, then minimal total weight,
then the selection that keeps the earliest still-undecided item (so two
otherwise-equal solutions differ first at some item index, and the one
selecting that item wins).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cost import HIGH_BITS, LOW_BITS, BudgetSpec, SelectableItem
from .errors import NegativeGain, TooManyItems
from .model_io import NetworkManifest

VALUE_SCALE = 10000
BRUTE_FORCE_LIMIT = 20

_INF = np.int64(1) << 62


@dataclass(frozen=True)
class IntegerizedItem:
    id: str
    value: int  # in [1, VALUE_SCALE]
    weight: int  # BMACs


@dataclass
class Integerization:
    items: list[IntegerizedItem]
    all_zero: bool = False  # every input gain was 0; any selection is equally good


@dataclass(frozen=True)
class Selection:
    ids: tuple[str, ...]
    objective: int
    total_weight: int


def integerize_gains(items: Sequence[SelectableItem]) -> Integerization:
    """Scale gains proportionally onto [1, VALUE_SCALE].

    Preserves gain ratios to 1e-4 relative granularity; gains below half a
    quantum are clamped up to value 1 so no item becomes worthless for free.
    All-zero gain vectors are degenerate (any selection is equally good) and
    yield all values = 1 plus a warning flag rather than an error.
    """
    for item in items:
        if item.gain < 0:
            raise NegativeGain(f"item '{item.id}' has negative gain {item.gain}")
    max_gain = max((item.gain for item in items), default=0.0)
    if max_gain == 0.0:
        return Integerization(
            items=[IntegerizedItem(item.id, 1, item.weight) for item in items],
            all_zero=bool(items),
        )
    scaled = [
        IntegerizedItem(item.id, max(1, round(item.gain / max_gain * VALUE_SCALE)), item.weight)
        for item in items
    ]
    return Integerization(items=scaled, all_zero=False)


def _arrays(items: Sequence[IntegerizedItem]) -> tuple[np.ndarray, np.ndarray]:
    values = np.array([item.value for item in items], dtype=np.int64)
    weights = np.array([item.weight for item in items], dtype=np.int64)
    if (values < 0).any():
        raise ValueError("item values must be >= 0")
    if (weights < 0).any():
        raise ValueError("item weights must be >= 0")
    return values, weights


def _next_suffix_row(row: np.ndarray, value: int, weight: int) -> np.ndarray:
    """Given min-weights over items i+1.., fold in item i."""
    out = row.copy()
    if value == 0:
        np.minimum(out, row + weight, out=out)
    else:
        np.minimum(out[value:], row[:-value] + weight, out=out[value:])
    return out


def solve_01(items: Sequence[IntegerizedItem], capacity: int) -> Selection:
    """Exact 0-1 knapsack: maximize total value with total weight <= capacity.

    Runs the min-weight-per-value DP backwards over the item list, keeping
    sqrt(L)-spaced checkpoint rows, then walks forward reconstructing the
    tie-broken optimal selection (see module docstring for the tie order).
    """
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")
    n = len(items)
    if n == 0:
        return Selection(ids=(), objective=0, total_weight=0)
    values, weights = _arrays(items)
    vtot = int(values.sum())
    block = max(1, math.isqrt(n))
    # table rows scale with the value sum; integerized items keep this tiny
    if (n // block + block + 2) * (vtot + 1) > 250_000_000:
        raise ValueError(f"value sum {vtot} too large for the value-space DP")

    # suffix[i][v] = min weight of a subset of items i.. with value exactly v
    checkpoints: dict[int, np.ndarray] = {}
    row = np.full(vtot + 1, _INF, dtype=np.int64)
    row[0] = 0
    checkpoints[n] = row
    for i in range(n - 1, -1, -1):
        row = _next_suffix_row(row, int(values[i]), int(weights[i]))
        if i % block == 0:
            checkpoints[i] = row

    first = checkpoints[0]
    best_value = int(np.flatnonzero(first <= capacity)[-1])
    best_weight = int(first[best_value])

    # Walk forward; prefer selecting item i whenever some min-weight optimum
    # completion does, which realizes the earliest-item tie-break.
    selected: list[int] = []
    need_value, need_weight = best_value, best_weight
    cache: dict[int, np.ndarray] = {}
    for i in range(n):
        nxt = i + 1
        if nxt not in cache:
            top = min((i // block + 1) * block, n)
            cache = {top: checkpoints[top]}
            for j in range(top - 1, i, -1):
                cache[j] = _next_suffix_row(cache[j + 1], int(values[j]), int(weights[j]))
        suffix_next = cache[nxt]
        v, w = int(values[i]), int(weights[i])
        if v <= need_value and w <= need_weight and suffix_next[need_value - v] == need_weight - w:
            selected.append(i)
            need_value -= v
            need_weight -= w
    assert need_value == 0 and need_weight == 0, "DP reconstruction failed"
    return Selection(
        ids=tuple(items[i].id for i in selected),
        objective=best_value,
        total_weight=best_weight,
    )


def brute_force(items: Sequence[IntegerizedItem], capacity: int) -> Selection:
    """Exhaustive oracle over all 2**L subsets with the same tie-breaking."""
    n = len(items)
    if n > BRUTE_FORCE_LIMIT:
        raise TooManyItems(f"{n} items exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")
    values, weights = _arrays(items)
    subset_values = np.zeros(1, dtype=np.int64)
    subset_weights = np.zeros(1, dtype=np.int64)
    for i in range(n):
        subset_values = np.concatenate([subset_values, subset_values + values[i]])
        subset_weights = np.concatenate([subset_weights, subset_weights + weights[i]])
    feasible = subset_weights <= capacity
    best_value = int(subset_values[feasible].max())
    candidates = np.flatnonzero(feasible & (subset_values == best_value))
    best_weight = int(subset_weights[candidates].min())
    candidates = candidates[subset_weights[candidates] == best_weight]
    # earliest-item preference: maximize the bit-reversed mask
    reversed_masks = np.zeros(len(candidates), dtype=np.int64)
    for i in range(n):
        reversed_masks |= ((candidates >> i) & 1) << (n - 1 - i)
    mask = int(candidates[int(np.argmax(reversed_masks))])
    ids = tuple(item.id for i, item in enumerate(items) if (mask >> i) & 1)
    return Selection(ids=ids, objective=best_value, total_weight=best_weight)


def select_all(items: Sequence[IntegerizedItem]) -> Selection:
    """Trivial selection for degenerate budgets that cover everything."""
    return Selection(
        ids=tuple(item.id for item in items),
        objective=int(sum(item.value for item in items)),
        total_weight=int(sum(item.weight for item in items)),
    )


@dataclass
class PrecisionAssignment:
    """Chosen bit-width per layer plus cost/objective summary."""

    bits_per_layer: dict[str, int]
    selected_items: tuple[str, ...]
    total_cost: int  # realized BMACs over configurable layers
    objective: int  # integerized value of the selection
    budget: BudgetSpec
    compression_ratio: float | None = None
    network: str = ""


def assignment_from_selection(
    selection: Selection,
    items: Sequence[SelectableItem],
    manifest: NetworkManifest,
    budget: BudgetSpec,
) -> PrecisionAssignment:
    """Expand an item selection into per-layer bits: members of selected items
    stay at 4-bit, the rest drop to 2-bit, fixed layers keep their pin."""
    chosen = set(selection.ids)
    layer_bits_from_items: dict[str, int] = {}
    total_cost = 0
    for item in items:
        bits = HIGH_BITS if item.id in chosen else LOW_BITS
        total_cost += item.cost_hi if item.id in chosen else item.cost_lo
        for member in item.member_layers:
            layer_bits_from_items[member] = bits

    bits_per_layer: dict[str, int] = {}
    for layer in manifest.layers:
        if layer.selectable:
            bits_per_layer[layer.name] = layer_bits_from_items[layer.name]
        else:
            bits_per_layer[layer.name] = layer.effective_fixed_bits
    return PrecisionAssignment(
        bits_per_layer=bits_per_layer,
        selected_items=selection.ids,
        total_cost=total_cost,
        objective=selection.objective,
        budget=budget,
        network=manifest.name,
    )
