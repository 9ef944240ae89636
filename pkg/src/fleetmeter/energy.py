"""Energy decomposition of serving telemetry.

Each allocated machine-hour contributes

    total    = P_total * t_total * PUE
    overhead = P_total * t_total * (PUE - 1)
    idle     = P_idle * t_idle
    active   = P_total * t_total - P_idle * t_idle
    host     = active * P_host / P_total
    accel    = active * P_accel / P_total

in Wh (W x h). Reductions run over records sorted by (machine_id, hour) and
use ``math.fsum``, which is exactly rounded and therefore independent of
record order.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from fleetmeter.errors import FleetmeterError, JoinError, TelemetryError
from fleetmeter.footprint import factors_for_date
from fleetmeter.records import (
    AllocationRecord,
    Bundle,
    FactorSet,
    MachineSpec,
    PowerSample,
    PromptTally,
    Window,
)

ALL_MODELS = "ALL"

COMPREHENSIVE = "comprehensive"
EXISTING = "existing"

COMPONENT_FIELDS = ("e_total", "e_overhead", "e_idle", "e_active_host", "e_active_accel")


@dataclass(frozen=True)
class EnergyComponents:
    """Absolute energy (Wh) of a set of machine-hours."""

    e_total: float = 0.0
    e_overhead: float = 0.0
    e_idle: float = 0.0
    e_active_host: float = 0.0
    e_active_accel: float = 0.0
    machine_hours: float = 0.0
    machine_hours_by_hw: Mapping[str, float] = field(default_factory=dict)
    window: Window | None = None
    model_id: str = ALL_MODELS

    @property
    def e_active(self) -> float:
        return self.e_active_host + self.e_active_accel

    def values(self) -> tuple[float, float, float, float, float]:
        return (self.e_total, self.e_overhead, self.e_idle, self.e_active_host, self.e_active_accel)

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in COMPONENT_FIELDS}
        out["machine_hours"] = self.machine_hours
        out["machine_hours_by_hw"] = dict(sorted(self.machine_hours_by_hw.items()))
        return out


@dataclass(frozen=True)
class PerPromptEnergy:
    """Energy components divided by a prompt count (Wh/prompt).

    Under the existing boundary only the active-accelerator share counts
    toward ``headline``; the other components are kept for reporting.
    """

    e_total: float
    e_overhead: float
    e_idle: float
    e_active_host: float
    e_active_accel: float
    q: int
    boundary: str = COMPREHENSIVE

    @property
    def headline(self) -> float:
        return self.e_active_accel if self.boundary == EXISTING else self.e_total

    def values(self) -> tuple[float, float, float, float, float]:
        return (self.e_total, self.e_overhead, self.e_idle, self.e_active_host, self.e_active_accel)

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in COMPONENT_FIELDS}
        out.update(q=self.q, boundary=self.boundary, headline=self.headline)
        return out


def machine_hour_components(
    sample: PowerSample, alloc: AllocationRecord, pue: float
) -> EnergyComponents:
    if (sample.machine_id, sample.hour) != (alloc.machine_id, alloc.hour):
        raise JoinError(
            f"power sample {sample.machine_id}@{sample.hour:%Y-%m-%dT%HZ} does not match "
            f"allocation {alloc.machine_id}@{alloc.hour:%Y-%m-%dT%HZ}"
        )
    if pue < 1.0:
        raise FleetmeterError(f"PUE {pue} below 1.0")
    e = _hour_terms(sample.p_host, sample.p_accel, alloc.t_total, alloc.t_idle, alloc.p_idle, pue)
    if e is None:
        raise TelemetryError(
            f"idle energy exceeds measured energy for machine {alloc.machine_id} "
            f"at {alloc.hour:%Y-%m-%dT%HZ}"
        )
    return EnergyComponents(*e, machine_hours=alloc.t_total, model_id=alloc.model_id)


def _hour_terms(p_host, p_accel, t_total, t_idle, p_idle, pue):
    p_total = p_host + p_accel
    measured = p_total * t_total
    idle = p_idle * t_idle
    if idle > measured:
        return None
    active = measured - idle
    if p_total > 0:
        host = active * p_host / p_total
        accel = active * p_accel / p_total
    else:
        host = accel = 0.0
    return (measured * pue, measured * (pue - 1.0), idle, host, accel)


@dataclass(frozen=True, slots=True)
class MachineHour:
    """One allocation joined with its power sample, machine spec and PUE."""

    machine_id: str
    hour: dt.datetime
    job_id: str
    model_id: str
    campus_id: str
    hardware_class: str
    t_total: float
    terms: tuple[float, float, float, float, float]

    @property
    def day(self) -> dt.date:
        return self.hour.date()


def join_machine_hours(
    samples: Iterable[PowerSample],
    allocs: Iterable[AllocationRecord],
    machines: Iterable[MachineSpec],
    factors: Mapping[int, FactorSet],
    window: Window | None = None,
) -> list[MachineHour]:
    """Join allocations to telemetry and compute per-hour energy terms.

    Every join failure in the selection is reported in one ``JoinError``.
    """
    power = {(s.machine_id, s.hour): s for s in samples}
    specs = {m.machine_id: m for m in machines}
    missing_power: list[tuple[str, str]] = []
    missing_machine: set[str] = set()
    bad: list[str] = []
    out: list[MachineHour] = []
    pue_cache: dict[tuple[int, str], float] = {}
    for a in allocs:
        day = a.hour.date()
        if window is not None and not window.contains(day):
            continue
        s = power.get((a.machine_id, a.hour))
        spec = specs.get(a.machine_id)
        if s is None:
            missing_power.append((a.machine_id, f"{a.hour:%Y-%m-%dT%HZ}"))
        if spec is None:
            missing_machine.add(a.machine_id)
        if s is None or spec is None:
            continue
        if s.campus_id != spec.campus_id:
            bad.append(
                f"machine {a.machine_id} reports campus {s.campus_id} at "
                f"{a.hour:%Y-%m-%dT%HZ} but machines.csv says {spec.campus_id}"
            )
            continue
        ck = (day.year, spec.campus_id)
        pue = pue_cache.get(ck)
        if pue is None:
            pue = pue_cache[ck] = factors_for_date(day, factors).pue(spec.campus_id)
        terms = _hour_terms(s.p_host, s.p_accel, a.t_total, a.t_idle, a.p_idle, pue)
        if terms is None:
            bad.append(
                f"idle energy exceeds measured energy for machine {a.machine_id} "
                f"at {a.hour:%Y-%m-%dT%HZ}"
            )
            continue
        out.append(
            MachineHour(
                a.machine_id, a.hour, a.job_id, a.model_id, spec.campus_id,
                spec.hardware_class, a.t_total, terms,
            )
        )
    if missing_machine:
        raise JoinError(
            "machine(s) missing from machines.csv: " + ", ".join(sorted(missing_machine)),
            sorted(missing_machine),
        )
    if missing_power:
        shown = ", ".join(f"({m}, {h})" for m, h in missing_power[:20])
        more = f" and {len(missing_power) - 20} more" if len(missing_power) > 20 else ""
        raise JoinError(
            f"{len(missing_power)} allocation(s) without a power sample: {shown}{more}",
            missing_power,
        )
    if bad:
        raise TelemetryError("; ".join(bad[:20]) + (f" (+{len(bad) - 20} more)" if len(bad) > 20 else ""))
    out.sort(key=lambda h: (h.machine_id, h.hour, h.job_id))
    return out


def sum_machine_hours(
    hours: Sequence[MachineHour], model_id: str = ALL_MODELS, window: Window | None = None
) -> EnergyComponents:
    cols: list[list[float]] = [[], [], [], [], []]
    t_total: list[float] = []
    by_hw: dict[str, list[float]] = {}
    for h in hours:
        for col, x in zip(cols, h.terms):
            col.append(x)
        t_total.append(h.t_total)
        by_hw.setdefault(h.hardware_class, []).append(h.t_total)
    return EnergyComponents(
        *(math.fsum(c) for c in cols),
        machine_hours=math.fsum(t_total),
        machine_hours_by_hw={hw: math.fsum(v) for hw, v in sorted(by_hw.items())},
        window=window,
        model_id=model_id,
    )


def aggregate_components(
    samples: Iterable[PowerSample],
    allocs: Iterable[AllocationRecord],
    machines: Iterable[MachineSpec],
    factors: Mapping[int, FactorSet],
    model_id: str = ALL_MODELS,
    window: Window | None = None,
) -> EnergyComponents:
    """Total energy of every machine-hour allocated to ``model_id`` in ``window``."""
    if model_id != ALL_MODELS:
        allocs = [a for a in allocs if a.model_id == model_id]
    hours = join_machine_hours(samples, allocs, machines, factors, window)
    return sum_machine_hours(hours, model_id, window)


def per_prompt_energy(
    components: EnergyComponents, q: int, boundary: str = COMPREHENSIVE
) -> PerPromptEnergy:
    if q <= 0:
        raise FleetmeterError("zero prompt count")
    return PerPromptEnergy(*(x / q for x in components.values()), q=q, boundary=boundary)


class Fleet:
    """Joined view of a bundle that answers repeated window/model queries."""

    def __init__(self, bundle: Bundle, window: Window | None = None):
        self.bundle = bundle
        self.factors = bundle.factors
        self.hours = join_machine_hours(
            bundle.samples, bundle.allocations, bundle.machines, bundle.factors, window
        )
        self.tallies: tuple[PromptTally, ...] = tuple(
            t for t in bundle.tallies if window is None or window.contains(t.day)
        )

    def models(self) -> list[str]:
        return sorted({h.model_id for h in self.hours} | {t.model_id for t in self.tallies})

    def days(self) -> list[dt.date]:
        return sorted({h.day for h in self.hours} | {t.day for t in self.tallies})

    def select(
        self, window: Window | None = None, model_id: str = ALL_MODELS
    ) -> list[MachineHour]:
        return [
            h for h in self.hours
            if (window is None or window.contains(h.day))
            and (model_id == ALL_MODELS or h.model_id == model_id)
        ]

    def components(self, window: Window | None = None, model_id: str = ALL_MODELS) -> EnergyComponents:
        return sum_machine_hours(self.select(window, model_id), model_id, window)

    def grouped(
        self, key: Callable[[MachineHour], Hashable], window: Window | None = None
    ) -> dict:
        groups: dict = {}
        for h in self.select(window):
            groups.setdefault(key(h), []).append(h)
        return {k: sum_machine_hours(v, window=window) for k, v in groups.items()}

    def prompts(self, window: Window | None = None, model_id: str = ALL_MODELS) -> int:
        return sum(
            t.q for t in self.tallies
            if (window is None or window.contains(t.day))
            and (model_id == ALL_MODELS or t.model_id == model_id)
        )

    def prompts_grouped(
        self, key: Callable[[PromptTally], Hashable], window: Window | None = None
    ) -> dict:
        out: dict = {}
        for t in self.tallies:
            if window is None or window.contains(t.day):
                k = key(t)
                out[k] = out.get(k, 0) + t.q
        return out


def cross_check(bundle: Bundle) -> list[tuple[str, str]]:
    """Every cross-file inconsistency of a parsed bundle as (file, message) pairs."""
    problems: list[tuple[str, str]] = []
    power = {(s.machine_id, s.hour): s for s in bundle.samples}
    specs = {m.machine_id: m for m in bundle.machines}
    alloc_days: set[tuple[str, dt.date]] = set()
    unknown_machines: set[str] = set()
    for a in bundle.allocations:
        day = a.hour.date()
        alloc_days.add((a.model_id, day))
        stamp = f"{a.hour:%Y-%m-%dT%HZ}"
        s = power.get((a.machine_id, a.hour))
        spec = specs.get(a.machine_id)
        if s is None:
            problems.append(("alloc.csv", f"no power sample for ({a.machine_id}, {stamp})"))
        if spec is None:
            if a.machine_id not in unknown_machines:
                unknown_machines.add(a.machine_id)
                problems.append(("alloc.csv", f"machine {a.machine_id} missing from machines.csv"))
        if s is None or spec is None:
            continue
        if s.campus_id != spec.campus_id:
            problems.append((
                "power.csv",
                f"machine {a.machine_id} at {stamp} reports campus {s.campus_id}, "
                f"machines.csv says {spec.campus_id}",
            ))
        try:
            fs = factors_for_date(day, bundle.factors)
            pue = fs.pue(spec.campus_id)
            fs.embodied_rate(spec.hardware_class)
        except FleetmeterError as exc:
            problems.append(("factors.json", str(exc)))
            continue
        if _hour_terms(s.p_host, s.p_accel, a.t_total, a.t_idle, a.p_idle, pue) is None:
            problems.append(
                ("alloc.csv", f"idle energy exceeds measured energy for ({a.machine_id}, {stamp})")
            )
    for t in bundle.tallies:
        if t.q > 0 and (t.model_id, t.day) not in alloc_days:
            problems.append((
                "prompts.csv",
                f"model {t.model_id} has {t.q} prompts on {t.day.isoformat()} "
                "but no allocations that day",
            ))
    # one message per distinct problem, in first-seen order
    return list(dict.fromkeys(problems))
