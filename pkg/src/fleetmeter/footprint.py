"""Emissions and water per prompt from per-prompt energy.

Factors are annual fleet averages published once a year, so a date in year
Y is always converted with the factors of year Y - 1.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import TYPE_CHECKING, Mapping

from fleetmeter.errors import FactorLookupError, FleetmeterError
from fleetmeter.records import FactorSet

if TYPE_CHECKING:
    from fleetmeter.energy import PerPromptEnergy


@dataclass(frozen=True)
class EmissionsPerPrompt:
    """gCO2e per prompt."""

    scope2_mb: float
    scope1_3: float

    @property
    def total(self) -> float:
        return self.scope2_mb + self.scope1_3

    def as_dict(self) -> dict:
        return {"scope2_mb": self.scope2_mb, "scope1_3": self.scope1_3, "total": self.total}


@dataclass(frozen=True)
class WaterPerPrompt:
    consumption_ml: float

    def as_dict(self) -> dict:
        return {"consumption_ml": self.consumption_ml}


def factors_for_date(date: dt.date, table: Mapping[int, FactorSet]) -> FactorSet:
    year = date.year - 1
    try:
        return table[year]
    except KeyError:
        raise FactorLookupError(
            f"no conversion factors for {year} (needed for {date.isoformat()})"
        ) from None


def emissions_per_prompt(
    energy: PerPromptEnergy,
    factors: FactorSet,
    machine_hours_by_hw: Mapping[str, float],
    q: int,
) -> EmissionsPerPrompt:
    """Market-based Scope 2 plus embodied Scope 1+3 emissions per prompt.

    Embodied emissions accrue per allocated machine-hour at the hardware
    class rate and are shared evenly over the ``q`` prompts served.
    Emission factors are g/kWh and energy Wh, hence the division by 1000.
    """
    if q <= 0:
        raise FleetmeterError("zero prompt count")
    scope2 = energy.headline * factors.ef_mb / 1000.0
    embodied = math.fsum(
        hours * factors.embodied_rate(hw) for hw, hours in sorted(machine_hours_by_hw.items())
    )
    return EmissionsPerPrompt(scope2_mb=scope2, scope1_3=embodied / q)


def water_per_prompt(energy: PerPromptEnergy, factors: FactorSet) -> WaterPerPrompt:
    # L/kWh is numerically mL/Wh
    it_energy = energy.e_total - energy.e_overhead
    if energy.boundary == "existing":
        it_energy = energy.headline
    return WaterPerPrompt(consumption_ml=it_energy * factors.wue)


def fleet_weighted_factor(values: Mapping[str, float], weights: Mapping[str, float]) -> float:
    """Average of per-site factors weighted by each site's AI-serving energy."""
    missing = sorted(set(values) - set(weights))
    if missing:
        raise FleetmeterError(f"no weight for site(s) {', '.join(missing)}")
    if any(weights[k] < 0 for k in values):
        raise FleetmeterError("weights must be non-negative")
    total = math.fsum(weights[k] for k in values)
    if total <= 0:
        raise FleetmeterError("all weights are zero")
    return math.fsum(values[k] * weights[k] for k in values) / total


def round_display(x: float, places: int = 2) -> str:
    """Round half-to-even on the decimal representation of ``x``."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(x)).quantize(quantum, rounding=ROUND_HALF_EVEN))
