"""Comprehensive versus existing measurement boundaries.

The existing approach counts only active accelerator energy and only in the
most efficient data centers (lowest daily accelerator energy per prompt).
The comprehensive approach counts every component over the whole fleet.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Sequence

from fleetmeter.energy import (
    ALL_MODELS,
    COMPREHENSIVE,
    EXISTING,
    EnergyComponents,
    Fleet,
    MachineHour,
    PerPromptEnergy,
    join_machine_hours,
    per_prompt_energy,
    sum_machine_hours,
)
from fleetmeter.errors import FleetmeterError
from fleetmeter.records import (
    AllocationRecord,
    FactorSet,
    MachineSpec,
    PowerSample,
    PromptTally,
    Window,
)

DEFAULT_FRACTION = 0.10


@dataclass(frozen=True)
class DcEfficiencyRow:
    datacenter_id: str
    day: dt.date
    accel_energy_wh: float
    q: int
    components: EnergyComponents = field(default_factory=EnergyComponents, compare=False)

    @property
    def energy_per_prompt(self) -> float:
        return self.accel_energy_wh / self.q

    def as_dict(self) -> dict:
        return {
            "datacenter_id": self.datacenter_id,
            "day": self.day.isoformat(),
            "accel_energy_wh": self.accel_energy_wh,
            "q": self.q,
            "energy_per_prompt": self.energy_per_prompt,
        }


def efficiency_rows(
    hours: Iterable[MachineHour],
    tallies: Iterable[PromptTally],
    day: dt.date,
    model_set: Collection[str] | None = None,
) -> list[DcEfficiencyRow]:
    """Per-DC rows for one day from already-joined machine-hours."""
    by_dc: dict[str, list[MachineHour]] = {}
    for h in hours:
        if h.day == day and (model_set is None or h.model_id in model_set):
            by_dc.setdefault(h.campus_id, []).append(h)
    q_by_dc: dict[str, int] = {}
    for t in tallies:
        if t.day == day and (model_set is None or t.model_id in model_set):
            q_by_dc[t.datacenter_id] = q_by_dc.get(t.datacenter_id, 0) + t.q
    rows = []
    for dc, q in sorted(q_by_dc.items()):
        if q <= 0:
            continue
        comp = sum_machine_hours(by_dc.get(dc, []), window=Window.day(day))
        if comp.e_active_accel <= 0:
            raise FleetmeterError(
                f"datacenter {dc} served {q} prompts on {day.isoformat()} "
                "but has no accelerator energy telemetry"
            )
        rows.append(DcEfficiencyRow(dc, day, comp.e_active_accel, q, comp))
    rows.sort(key=lambda r: (r.energy_per_prompt, r.datacenter_id))
    return rows


def dc_daily_efficiency(
    samples: Iterable[PowerSample],
    allocs: Iterable[AllocationRecord],
    machines: Iterable[MachineSpec],
    tallies: Iterable[PromptTally],
    factors: Mapping[int, FactorSet],
    model_set: Collection[str] | None,
    day: dt.date,
) -> list[DcEfficiencyRow]:
    """Rows sorted ascending by accelerator energy per prompt, ties by DC id."""
    hours = join_machine_hours(samples, allocs, machines, factors, Window.day(day))
    return efficiency_rows(hours, tallies, day, model_set)


def selection_size(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise FleetmeterError(f"fraction must be in (0, 1], got {fraction}")
    # round away float noise such as 0.1 * 30 = 3.0000000000000004
    return max(1, math.ceil(round(fraction * n, 9)))


def select_top(rows: Sequence[DcEfficiencyRow], fraction: float = DEFAULT_FRACTION) -> list[DcEfficiencyRow]:
    if not rows:
        raise FleetmeterError("no datacenter rows to subsample")
    return list(rows[: selection_size(len(rows), fraction)])


def _pooled(selected: Sequence[DcEfficiencyRow]) -> tuple[EnergyComponents, int]:
    comps = [r.components for r in selected]
    hw: dict[str, list[float]] = {}
    for c in comps:
        for k, v in c.machine_hours_by_hw.items():
            hw.setdefault(k, []).append(v)
    pooled = EnergyComponents(
        e_total=math.fsum(c.e_total for c in comps),
        e_overhead=math.fsum(c.e_overhead for c in comps),
        e_idle=math.fsum(c.e_idle for c in comps),
        e_active_host=math.fsum(c.e_active_host for c in comps),
        e_active_accel=math.fsum(r.accel_energy_wh for r in selected),
        machine_hours=math.fsum(c.machine_hours for c in comps),
        machine_hours_by_hw={k: math.fsum(v) for k, v in sorted(hw.items())},
    )
    return pooled, sum(r.q for r in selected)


def existing_boundary(
    rows: Sequence[DcEfficiencyRow], fraction: float = DEFAULT_FRACTION
) -> PerPromptEnergy:
    """Accelerator-only energy per prompt over the most efficient ``fraction`` of DCs."""
    pooled, q = _pooled(select_top(rows, fraction))
    return per_prompt_energy(pooled, q, boundary=EXISTING)


@dataclass(frozen=True)
class ExistingResult:
    energy: PerPromptEnergy
    components: EnergyComponents
    selected: tuple[DcEfficiencyRow, ...]


def existing_boundary_window(
    fleet: Fleet,
    window: Window,
    model_id: str = ALL_MODELS,
    fraction: float = DEFAULT_FRACTION,
) -> ExistingResult:
    """Existing-approach energy over a window of days.

    The DC subsample is chosen per day, then the selected DC-days are pooled.
    """
    model_set = None if model_id == ALL_MODELS else {model_id}
    hours_by_day: dict[dt.date, list[MachineHour]] = {}
    for h in fleet.select(window, model_id):
        hours_by_day.setdefault(h.day, []).append(h)
    tallies_by_day: dict[dt.date, list[PromptTally]] = {}
    for t in fleet.tallies:
        tallies_by_day.setdefault(t.day, []).append(t)
    selected: list[DcEfficiencyRow] = []
    for day in window.days():
        rows = efficiency_rows(hours_by_day.get(day, []), tallies_by_day.get(day, []), day, model_set)
        if rows:
            selected.extend(select_top(rows, fraction))
    if not selected:
        raise FleetmeterError("empty window")
    pooled, q = _pooled(selected)
    pooled = EnergyComponents(
        *pooled.values(),
        machine_hours=pooled.machine_hours,
        machine_hours_by_hw=pooled.machine_hours_by_hw,
        window=window,
        model_id=model_id,
    )
    return ExistingResult(per_prompt_energy(pooled, q, boundary=EXISTING), pooled, tuple(selected))


def comprehensive_boundary(components: EnergyComponents, q: int) -> PerPromptEnergy:
    return per_prompt_energy(components, q, boundary=COMPREHENSIVE)


def boundary_ratio(comprehensive: PerPromptEnergy, existing: PerPromptEnergy) -> float:
    """How many times larger the comprehensive headline is than the existing one."""
    if existing.headline <= 0:
        raise FleetmeterError("existing-boundary energy is zero")
    return comprehensive.headline / existing.headline


def boundary_scaling_factor(comprehensive: PerPromptEnergy, existing_accel_only: float) -> float:
    """Multiplier turning fleet-average active accelerator energy into full-stack energy."""
    if existing_accel_only <= 0:
        raise FleetmeterError("accelerator energy per prompt is zero")
    return comprehensive.e_total / existing_accel_only
