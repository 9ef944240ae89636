"""Median-prompt metrics and multi-period trends.

Models are ranked by energy per prompt and the prompt at position
ceil(Q / 2) of the ranked cumulative prompt distribution picks the median
model. Its full per-prompt vector is the reported metric.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from fleetmeter.energy import (
    COMPREHENSIVE,
    EnergyComponents,
    Fleet,
    PerPromptEnergy,
    per_prompt_energy,
)
from fleetmeter.errors import FleetmeterError
from fleetmeter.footprint import (
    EmissionsPerPrompt,
    WaterPerPrompt,
    emissions_per_prompt,
    factors_for_date,
    water_per_prompt,
)
from fleetmeter.records import FactorSet, Window

# model_id -> (absolute components, prompt count)
ModelTable = Mapping[str, "tuple[EnergyComponents, int]"]


@dataclass(frozen=True)
class ModelRankRow:
    model_id: str
    energy_per_prompt: float
    q: int
    cumulative_q: int
    energy: PerPromptEnergy | None = field(default=None, compare=False)
    machine_hours_by_hw: Mapping[str, float] = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "energy_per_prompt": self.energy_per_prompt,
            "q": self.q,
            "cumulative_q": self.cumulative_q,
        }


@dataclass(frozen=True)
class MedianReport:
    window: Window | None
    median_model_id: str
    energy: PerPromptEnergy
    emissions: EmissionsPerPrompt | None = None
    water: WaterPerPrompt | None = None
    ranking: tuple[ModelRankRow, ...] = ()
    mean_energy_per_prompt: float | None = None
    factors_year: int | None = None
    excluded_models: tuple[str, ...] = ()

    @property
    def total_q(self) -> int:
        return self.ranking[-1].cumulative_q if self.ranking else self.energy.q


@dataclass(frozen=True)
class TrendReport:
    period_start: str
    period_end: str
    energy_reduction: float
    scope2_reduction: float
    scope1_3_reduction: float
    total_emissions_reduction: float

    def as_dict(self) -> dict:
        return {
            "period_start": self.period_start,
            "period_end": self.period_end,
            "energy_reduction": self.energy_reduction,
            "scope2_reduction": self.scope2_reduction,
            "scope1_3_reduction": self.scope1_3_reduction,
            "total_emissions_reduction": self.total_emissions_reduction,
        }


def rank_models(
    per_model: Iterable[tuple[str, PerPromptEnergy, int]],
    machine_hours: Mapping[str, Mapping[str, float]] | None = None,
) -> list[ModelRankRow]:
    items = sorted(per_model, key=lambda it: (it[1].headline, it[0]))
    if not items:
        raise FleetmeterError("no models to rank")
    rows = []
    cumulative = 0
    for model_id, energy, q in items:
        if q <= 0:
            raise FleetmeterError(f"model {model_id} has no prompts")
        cumulative += q
        hw = (machine_hours or {}).get(model_id, {})
        rows.append(ModelRankRow(model_id, energy.headline, q, cumulative, energy, dict(hw)))
    return rows


def median_index(total_q: int) -> int:
    """1-based position of the median prompt (lower median for even totals)."""
    return (total_q + 1) // 2


def median_prompt(rows: Sequence[ModelRankRow]) -> ModelRankRow:
    if not rows:
        raise FleetmeterError("no ranked models")
    target = median_index(rows[-1].cumulative_q)
    for row in rows:
        if row.cumulative_q >= target:
            return row
    raise AssertionError("cumulative prompt counts are not monotone")


def _pool(tables: Iterable[ModelTable]) -> dict[str, tuple[EnergyComponents, int]]:
    parts: dict[str, list[EnergyComponents]] = {}
    qs: dict[str, int] = {}
    for table in tables:
        for model_id, (comp, q) in table.items():
            parts.setdefault(model_id, []).append(comp)
            qs[model_id] = qs.get(model_id, 0) + q
    pooled = {}
    for model_id, comps in parts.items():
        hw: dict[str, list[float]] = {}
        for c in comps:
            for k, v in c.machine_hours_by_hw.items():
                hw.setdefault(k, []).append(v)
        pooled[model_id] = (
            EnergyComponents(
                *(math.fsum(col) for col in zip(*(c.values() for c in comps))),
                machine_hours=math.fsum(c.machine_hours for c in comps),
                machine_hours_by_hw={k: math.fsum(v) for k, v in sorted(hw.items())},
                model_id=model_id,
            ),
            qs[model_id],
        )
    return pooled


def table_median(
    table: ModelTable,
    factors: FactorSet | None = None,
    window: Window | None = None,
) -> MedianReport:
    """Median report of one model table; footprint added when ``factors`` is given.

    Models that used energy but served no prompts cannot be ranked and are
    listed in ``excluded_models``.
    """
    per_model = []
    excluded = []
    hw = {}
    for model_id, (comp, q) in sorted(table.items()):
        if q <= 0:
            excluded.append(model_id)
            continue
        per_model.append((model_id, per_prompt_energy(comp, q, COMPREHENSIVE), q))
        hw[model_id] = comp.machine_hours_by_hw
    if not per_model:
        raise FleetmeterError("empty window")
    rows = rank_models(per_model, hw)
    pick = median_prompt(rows)
    included = [table[m] for m, _, _ in per_model]
    mean = math.fsum(c.e_total for c, _ in included) / sum(q for _, q in included)
    emissions = water = None
    if factors is not None:
        emissions = emissions_per_prompt(pick.energy, factors, pick.machine_hours_by_hw, pick.q)
        water = water_per_prompt(pick.energy, factors)
    return MedianReport(
        window=window,
        median_model_id=pick.model_id,
        energy=pick.energy,
        emissions=emissions,
        water=water,
        ranking=tuple(rows),
        mean_energy_per_prompt=mean,
        factors_year=None if factors is None else factors.year,
        excluded_models=tuple(excluded),
    )


def window_median(
    daily_tables: Sequence[ModelTable],
    factors: FactorSet | None = None,
    window: Window | None = None,
) -> MedianReport:
    """Median over a multi-day window, pooling energy and prompts per model first."""
    if not daily_tables:
        raise FleetmeterError("empty window")
    return table_median(_pool(daily_tables), factors, window)


def median_of_daily_medians(reports: Sequence[MedianReport]) -> MedianReport:
    """Lower median of daily median reports, ordered by headline energy."""
    if not reports:
        raise FleetmeterError("empty window")
    ordered = sorted(
        reports,
        key=lambda r: (r.energy.headline, r.window.start if r.window else dt.date.min),
    )
    return ordered[median_index(len(ordered)) - 1]


def trend_reductions(series: Sequence[tuple[str, MedianReport]]) -> TrendReport:
    if len(series) < 2:
        raise FleetmeterError("trend needs at least two periods")
    (first_label, first), (last_label, last) = series[0], series[-1]
    if first.emissions is None or last.emissions is None:
        raise FleetmeterError("trend periods need emissions")

    def ratio(a: float, b: float, what: str) -> float:
        if b == 0:
            raise FleetmeterError(f"last-period {what} is zero")
        return a / b

    return TrendReport(
        period_start=first_label,
        period_end=last_label,
        energy_reduction=ratio(first.energy.headline, last.energy.headline, "energy"),
        scope2_reduction=ratio(first.emissions.scope2_mb, last.emissions.scope2_mb, "scope 2 emissions"),
        scope1_3_reduction=ratio(first.emissions.scope1_3, last.emissions.scope1_3, "scope 1+3 emissions"),
        total_emissions_reduction=ratio(first.emissions.total, last.emissions.total, "total emissions"),
    )


# --- fleet queries --------------------------------------------------------------


def model_tables_by_day(fleet: Fleet, window: Window) -> dict[dt.date, dict[str, tuple[EnergyComponents, int]]]:
    """Per-day model tables for every day in ``window`` that has data."""
    energy = fleet.grouped(lambda h: (h.day, h.model_id), window)
    prompts = fleet.prompts_grouped(lambda t: (t.day, t.model_id), window)
    tables: dict[dt.date, dict[str, tuple[EnergyComponents, int]]] = {}
    for key in sorted(set(energy) | set(prompts)):
        day, model_id = key
        comp = energy.get(key)
        q = prompts.get(key, 0)
        if comp is None:
            raise FleetmeterError(
                f"model {model_id} served {q} prompts on {day.isoformat()} without any allocation"
            )
        tables.setdefault(day, {})[model_id] = (comp, q)
    return tables


def window_factors(fleet: Fleet, window: Window) -> FactorSet:
    if window.start.year != window.end.year:
        raise FleetmeterError(
            f"window {window.start}..{window.end} spans two factor years; split it"
        )
    return factors_for_date(window.start, fleet.factors)


def fleet_median(fleet: Fleet, window: Window) -> MedianReport:
    tables = model_tables_by_day(fleet, window)
    if not tables:
        raise FleetmeterError("empty window")
    return window_median(list(tables.values()), window_factors(fleet, window), window)


def fleet_daily_medians(fleet: Fleet, window: Window) -> list[MedianReport]:
    tables = model_tables_by_day(fleet, window)
    if not tables:
        raise FleetmeterError("empty window")
    return [
        table_median(table, factors_for_date(day, fleet.factors), Window.day(day))
        for day, table in sorted(tables.items())
    ]


def month_windows(first: tuple[int, int], last: tuple[int, int]) -> list[Window]:
    (y, m), out = first, []
    if (y, m) > last:
        raise FleetmeterError("month range is empty")
    while (y, m) <= last:
        out.append(Window.month(y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out
