"""Typed input records shared by every pipeline stage."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping

from fleetmeter.errors import FactorLookupError

UTC = dt.timezone.utc


@dataclass(frozen=True, slots=True)
class PowerSample:
    """Hourly average tray power of one machine."""

    machine_id: str
    campus_id: str
    hour: dt.datetime
    p_host: float
    p_accel: float

    @property
    def p_total(self) -> float:
        return self.p_host + self.p_accel


@dataclass(frozen=True, slots=True)
class AllocationRecord:
    """One machine-hour of a machine assigned to a serving job."""

    machine_id: str
    model_id: str
    job_id: str
    hour: dt.datetime
    t_total: float
    t_idle: float
    p_idle: float


@dataclass(frozen=True, slots=True)
class PromptTally:
    model_id: str
    datacenter_id: str
    day: dt.date
    q: int


@dataclass(frozen=True, slots=True)
class MachineSpec:
    machine_id: str
    hardware_class: str
    campus_id: str


@dataclass(frozen=True)
class FactorSet:
    """Annual conversion factors.

    ``wue`` is in L/kWh, emission factors in gCO2e/kWh and embodied rates in
    gCO2e per allocated machine-hour.
    """

    year: int
    pue_by_campus: Mapping[str, float]
    wue: float
    ef_mb: float
    embodied_rate_by_hw: Mapping[str, float]
    ef_lb: float | None = None

    def pue(self, campus_id: str) -> float:
        try:
            return self.pue_by_campus[campus_id]
        except KeyError:
            raise FactorLookupError(
                f"no PUE for campus {campus_id!r} in {self.year} factors"
            ) from None

    def embodied_rate(self, hardware_class: str) -> float:
        try:
            return self.embodied_rate_by_hw[hardware_class]
        except KeyError:
            raise FactorLookupError(
                f"no embodied rate for hardware class {hardware_class!r} "
                f"in {self.year} factors"
            ) from None

    def summary(self) -> dict:
        out = {
            "year": self.year,
            "pue_by_campus": dict(sorted(self.pue_by_campus.items())),
            "wue_l_per_kwh": self.wue,
            "ef_mb_g_per_kwh": self.ef_mb,
            "embodied_g_per_machine_hour": dict(sorted(self.embodied_rate_by_hw.items())),
        }
        if self.ef_lb is not None:
            out["ef_lb_g_per_kwh"] = self.ef_lb
        return out


@dataclass(frozen=True, slots=True)
class Window:
    """Closed range of whole UTC days."""

    start: dt.date
    end: dt.date

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError(f"window end {self.end} precedes start {self.start}")

    @classmethod
    def month(cls, year: int, month: int) -> "Window":
        first = dt.date(year, month, 1)
        nxt = dt.date(year + month // 12, month % 12 + 1, 1)
        return cls(first, nxt - dt.timedelta(days=1))

    @classmethod
    def day(cls, day: dt.date) -> "Window":
        return cls(day, day)

    def contains(self, day: dt.date) -> bool:
        return self.start <= day <= self.end

    def days(self) -> list[dt.date]:
        n = (self.end - self.start).days + 1
        return [self.start + dt.timedelta(days=i) for i in range(n)]

    def as_dict(self) -> dict:
        return {"from": self.start.isoformat(), "to": self.end.isoformat()}


@dataclass(frozen=True)
class Bundle:
    """All parsed inputs of one fleet dataset."""

    samples: tuple[PowerSample, ...]
    allocations: tuple[AllocationRecord, ...]
    tallies: tuple[PromptTally, ...]
    machines: tuple[MachineSpec, ...]
    factors: Mapping[int, FactorSet] = field(default_factory=dict)
