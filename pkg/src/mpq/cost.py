"""Computational cost model and knapsack item construction.

Cost unit is the BMAC (bit multiply-accumulate): a layer at b bits costs
b * MACs.  Layers sharing a link group are merged into one selectable item
with summed gains and costs; fixed-precision layers are excluded entirely and
never count towards the budget.  The budget is a fraction of the all-4-bit
cost of the configurable layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    IncompleteAssignment,
    InfeasibleBudget,
    InvalidField,
    MissingGain,
    MixedFixedGroup,
    NoSelectableItems,
)
from .model_io import GainVector, NetworkManifest

HIGH_BITS = 4
LOW_BITS = 2
FP32_BITS = 32


def layer_cost(macs: int, bits: int) -> int:
    """BMAC cost of a layer: bits x MACs."""
    if macs < 0:
        raise InvalidField(f"macs must be >= 0, got {macs}")
    return bits * macs


@dataclass(frozen=True)
class SelectableItem:
    """One knapsack item: a selectable layer or a merged link group."""

    id: str
    member_layers: tuple[str, ...]
    gain: float
    cost_hi: int  # BMACs with every member at 4-bit
    cost_lo: int  # BMACs with every member at 2-bit

    @property
    def weight(self) -> int:
        """Extra BMACs paid for keeping the item at the higher precision."""
        return self.cost_hi - self.cost_lo


@dataclass(frozen=True)
class BudgetSpec:
    fraction: float
    capacity_bmacs: int


@dataclass(frozen=True)
class BudgetCapacity:
    """Knapsack capacity derived from a budget fraction.

    ``select_all`` marks the degenerate case where the budget already covers
    the all-4-bit cost, so no optimization is needed.
    """

    capacity_weight: int
    base_cost: int
    total_hi: int
    total_lo: int
    select_all: bool


def build_items(manifest: NetworkManifest, gains: GainVector) -> list[SelectableItem]:
    """Merge selectable layers into knapsack items, one per link group.

    Linked layers must share one precision, so a group becomes a single item
    whose gain and costs are the sums over its members.  A link group that
    mixes fixed and selectable layers is contradictory and rejected.
    """
    group_selectable: dict[str, bool] = {}
    for layer in manifest.layers:
        if layer.link_group is None:
            continue
        previous = group_selectable.get(layer.link_group)
        if previous is None:
            group_selectable[layer.link_group] = layer.selectable
        elif previous != layer.selectable:
            raise MixedFixedGroup(
                f"link group '{layer.link_group}' mixes fixed and selectable layers"
            )

    items: list[SelectableItem] = []
    index_of: dict[str, int] = {}
    for layer in manifest.layers:
        if not layer.selectable:
            continue
        if layer.name not in gains.entries:
            raise MissingGain(f"no gain for selectable layer '{layer.name}'")
        gain = gains.entries[layer.name]
        hi = layer_cost(layer.macs, HIGH_BITS)
        lo = layer_cost(layer.macs, LOW_BITS)
        key = layer.link_group if layer.link_group is not None else layer.name
        if layer.link_group is not None and key in index_of:
            i = index_of[key]
            old = items[i]
            items[i] = SelectableItem(
                id=old.id,
                member_layers=old.member_layers + (layer.name,),
                gain=old.gain + gain,
                cost_hi=old.cost_hi + hi,
                cost_lo=old.cost_lo + lo,
            )
        else:
            index_of[key] = len(items)
            items.append(
                SelectableItem(
                    id=key, member_layers=(layer.name,), gain=gain, cost_hi=hi, cost_lo=lo
                )
            )
    return items


def budget_capacity(items: list[SelectableItem], fraction: float) -> BudgetCapacity:
    """Translate a budget fraction into an integer knapsack capacity.

    B = fraction x (all-4-bit configurable cost); the capacity in item
    weights is floor(B - all-2-bit cost), which guarantees the realized cost
    never exceeds B.
    """
    if not items:
        raise NoSelectableItems("no selectable items; every layer is fixed")
    total_hi = sum(item.cost_hi for item in items)
    total_lo = sum(item.cost_lo for item in items)
    budget = fraction * total_hi
    if budget < total_lo:
        minimum = total_lo / total_hi if total_hi else 0.0
        raise InfeasibleBudget(
            f"budget fraction {fraction:g} is below the all-2-bit cost; "
            f"minimum feasible fraction is {minimum:.4f}"
        )
    capacity = int(math.floor(budget - total_lo))
    return BudgetCapacity(
        capacity_weight=capacity,
        base_cost=total_lo,
        total_hi=total_hi,
        total_lo=total_lo,
        select_all=budget >= total_hi,
    )


def compression_ratio(manifest: NetworkManifest, assignment) -> float:
    """Model compression versus 32-bit weights: 32*sum(params) / sum(bits*params)."""
    total_params = 0
    weighted_bits = 0
    for layer in manifest.layers:
        bits = assignment.bits_per_layer.get(layer.name)
        if bits is None:
            raise IncompleteAssignment(f"assignment is missing layer '{layer.name}'")
        total_params += layer.params
        weighted_bits += bits * layer.params
    if weighted_bits == 0:
        raise InvalidField("manifest has no parameters; compression ratio undefined")
    return (FP32_BITS * total_params) / weighted_bits
