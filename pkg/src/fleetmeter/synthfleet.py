"""Seeded synthetic fleets, closed-form calibration, and brute-force oracles.

Randomness comes from numpy's PCG64. The root ``SeedSequence(seed)`` is
spawned into three child streams, used in this order: power.csv jitter,
alloc.csv jitter, and a reserved prompts stream (prompt counts are
currently deterministic). All jitter is uniform with a +/-10% half-width.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from fleetmeter.boundary import selection_size
from fleetmeter.energy import ALL_MODELS, EnergyComponents
from fleetmeter.errors import FleetmeterError, JoinError, TelemetryError
from fleetmeter.ingest import (
    ALLOC_HEADER,
    BUNDLE_FILES,
    MACHINE_HEADER,
    POWER_HEADER,
    PROMPT_HEADER,
)
from fleetmeter.records import Window

JITTER = 0.10

# per-file stream indices of the spawned SeedSequence
POWER_STREAM, ALLOC_STREAM, PROMPT_STREAM = 0, 1, 2

NOMINAL_MACHINE_POWER_W = 2000.0
MIN_IDLE_FRACTION = 0.25

# 2023 and 2024 fleet factors: market- and location-based EF (g/kWh), WUE (L/kWh)
PUBLISHED_FACTORS = {
    2023: {"ef_mb_g_per_kwh": 135.0, "ef_lb_g_per_kwh": 366.0, "wue_l_per_kwh": 1.15},
    2024: {"ef_mb_g_per_kwh": 94.0, "ef_lb_g_per_kwh": 345.0, "wue_l_per_kwh": 1.15},
}


class ConfigError(FleetmeterError, ValueError):
    """A scenario config violates its schema or invariants."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    hardware_class: str
    p_host_w: float
    p_accel_w: float
    prompts_per_machine_hour: float
    idle_fraction: float
    idle_power_w: float
    allocated_fraction: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    days: int
    datacenters: int
    machines_per_dc: int
    models: tuple[ModelSpec, ...]
    pue_per_dc: tuple[float, ...]
    factor_years: Mapping[str, Mapping]
    start_date: dt.date = dt.date(2025, 5, 1)
    dc_utilization: tuple[float, ...] = ()
    monthly_efficiency_multiplier: tuple[float, ...] = (1.0,)
    days_per_month: int | None = None

    def __post_init__(self) -> None:
        validate_config(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        missing = sorted(
            {"seed", "days", "datacenters", "machines_per_dc", "models", "pue_per_dc", "factor_years"}
            - set(data)
        )
        if missing:
            raise ConfigError(f"missing config field(s): {', '.join(missing)}")
        if not isinstance(data["models"], list) or not all(isinstance(m, Mapping) for m in data["models"]):
            raise ConfigError("models must be a list of objects")
        if not isinstance(data["factor_years"], Mapping):
            raise ConfigError("factor_years must be an object keyed by year")
        try:
            models = tuple(ModelSpec(**m) for m in data["models"])
        except TypeError as exc:
            raise ConfigError(f"bad model entry: {exc}") from None
        n = data["datacenters"]
        pue = data["pue_per_dc"]
        if isinstance(pue, (int, float)) and isinstance(n, int):
            pue = [pue] * n
        kwargs = dict(
            seed=data["seed"],
            days=data["days"],
            datacenters=n,
            machines_per_dc=data["machines_per_dc"],
            models=models,
            pue_per_dc=tuple(pue),
            factor_years={str(k): dict(v) for k, v in data["factor_years"].items()},
        )
        if "start_date" in data:
            try:
                kwargs["start_date"] = dt.date.fromisoformat(data["start_date"])
            except (TypeError, ValueError):
                raise ConfigError(f"bad start_date {data['start_date']!r}") from None
        for name in ("dc_utilization", "monthly_efficiency_multiplier"):
            if name in data:
                if not isinstance(data[name], list):
                    raise ConfigError(f"{name} must be a list")
                kwargs[name] = tuple(data[name])
        if data.get("days_per_month") is not None:
            kwargs["days_per_month"] = data["days_per_month"]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "start_date": self.start_date.isoformat(),
            "days": self.days,
            "datacenters": self.datacenters,
            "machines_per_dc": self.machines_per_dc,
            "models": [asdict(m) for m in self.models],
            "pue_per_dc": list(self.pue_per_dc),
            "dc_utilization": list(self.utilization()),
            "monthly_efficiency_multiplier": list(self.monthly_efficiency_multiplier),
            "factor_years": {k: dict(v) for k, v in sorted(self.factor_years.items())},
        }
        if self.days_per_month is not None:
            out["days_per_month"] = self.days_per_month
        return out

    def utilization(self) -> tuple[float, ...]:
        return self.dc_utilization or (1.0,) * self.datacenters

    def calendar(self) -> list[dt.date]:
        days = [self.start_date + dt.timedelta(days=i) for i in range(self.days)]
        if self.days_per_month is not None:
            days = [d for d in days if d.day <= self.days_per_month]
        return days

    def multiplier(self, day: dt.date) -> float:
        k = (day.year - self.start_date.year) * 12 + day.month - self.start_date.month
        mults = self.monthly_efficiency_multiplier
        return mults[min(k, len(mults) - 1)]


def _positive_int(value: object, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")


def _number(value: object, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def validate_config(cfg: ScenarioConfig) -> None:
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {cfg.seed!r}")
    for name in ("days", "datacenters", "machines_per_dc"):
        _positive_int(getattr(cfg, name), name)
    if cfg.days_per_month is not None:
        _positive_int(cfg.days_per_month, "days_per_month")
    if not cfg.models:
        raise ConfigError("at least one model is required")
    ids = [m.model_id for m in cfg.models]
    if len(set(ids)) != len(ids):
        raise ConfigError("model ids must be unique")
    for m in cfg.models:
        where = f"model {m.model_id!r}"
        if not isinstance(m.model_id, str) or not m.model_id or "," in m.model_id:
            raise ConfigError(f"{where}: model_id must be a non-empty string without commas")
        if not isinstance(m.hardware_class, str) or not m.hardware_class or "," in m.hardware_class:
            raise ConfigError(f"{where}: hardware_class must be a non-empty string without commas")
        p_host = _number(m.p_host_w, f"{where}.p_host_w")
        p_accel = _number(m.p_accel_w, f"{where}.p_accel_w")
        rate = _number(m.prompts_per_machine_hour, f"{where}.prompts_per_machine_hour")
        idle = _number(m.idle_fraction, f"{where}.idle_fraction")
        p_idle = _number(m.idle_power_w, f"{where}.idle_power_w")
        alloc = _number(m.allocated_fraction, f"{where}.allocated_fraction")
        if p_host < 0 or p_accel < 0 or p_idle < 0:
            raise ConfigError(f"{where}: powers must be non-negative")
        if rate <= 0:
            raise ConfigError(f"{where}: prompts_per_machine_hour must be > 0")
        if not 0 <= idle < 1:
            raise ConfigError(f"{where}: idle_fraction must be in [0, 1)")
        if not 0 < alloc <= 1:
            raise ConfigError(f"{where}: allocated_fraction must be in (0, 1]")
        # worst case of the bounded jitter must keep idle energy below measured energy;
        # 0.01 W absorbs the 3-decimal rounding of written power values
        worst_idle = p_idle * min(idle * (1 + JITTER), 1.0)
        if worst_idle > 0 and worst_idle + 0.01 > (1 - JITTER) * (p_host + p_accel):
            raise ConfigError(
                f"{where}: idle_power_w * idle_fraction too large for the measured power "
                "under +/-10% jitter"
            )
    if len(cfg.pue_per_dc) != cfg.datacenters:
        raise ConfigError("pue_per_dc needs one value per datacenter")
    for i, p in enumerate(cfg.pue_per_dc):
        if _number(p, f"pue_per_dc[{i}]") < 1.0:
            raise ConfigError(f"pue_per_dc[{i}] below 1.0")
    if cfg.dc_utilization:
        if len(cfg.dc_utilization) != cfg.datacenters:
            raise ConfigError("dc_utilization needs one value per datacenter")
        for i, u in enumerate(cfg.dc_utilization):
            if _number(u, f"dc_utilization[{i}]") <= 0:
                raise ConfigError(f"dc_utilization[{i}] must be > 0")
    if not cfg.monthly_efficiency_multiplier:
        raise ConfigError("monthly_efficiency_multiplier must not be empty")
    for i, x in enumerate(cfg.monthly_efficiency_multiplier):
        if _number(x, f"monthly_efficiency_multiplier[{i}]") <= 0:
            raise ConfigError(f"monthly_efficiency_multiplier[{i}] must be > 0")
    if not isinstance(cfg.factor_years, Mapping) or not cfg.factor_years:
        raise ConfigError("factor_years must be a non-empty object")
    hw = {m.hardware_class for m in cfg.models}
    for year, entry in cfg.factor_years.items():
        rates = entry.get("embodied_g_per_machine_hour", {}) if isinstance(entry, Mapping) else {}
        absent = sorted(hw - set(rates))
        if absent:
            raise ConfigError(f"factor_years[{year}] lacks embodied rates for {', '.join(absent)}")


def _dc_id(d: int) -> str:
    return f"dc-{d:02d}"


def _machine_id(d: int, k: int) -> str:
    return f"m-{d:02d}-{k:03d}"


def factor_document(cfg: ScenarioConfig) -> dict:
    doc = {}
    for year, entry in sorted(cfg.factor_years.items()):
        e = dict(entry)
        e.setdefault("pue_by_campus", {_dc_id(d): p for d, p in enumerate(cfg.pue_per_dc)})
        doc[str(year)] = e
    return doc


def generate_scenario(cfg: ScenarioConfig) -> dict[str, str]:
    """Render a bundle as ``{file name: text}``; byte-identical for equal configs."""
    validate_config(cfg)
    streams = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(cfg.seed).spawn(3)]
    power_rng, alloc_rng = streams[POWER_STREAM], streams[ALLOC_STREAM]

    machines = []  # (dc index, machine id, model spec)
    for d in range(cfg.datacenters):
        for k in range(cfg.machines_per_dc):
            machines.append((d, _machine_id(d, k), cfg.models[k % len(cfg.models)]))
    util = cfg.utilization()
    calendar = cfg.calendar()
    n = len(calendar) * 24 * len(machines)
    power_u = power_rng.random((n, 2))
    alloc_u = alloc_rng.random((n, 2))

    power_lines = [",".join(POWER_HEADER)]
    alloc_lines = [",".join(ALLOC_HEADER)]
    prompts: dict[tuple[str, str, dt.date], float] = {}
    i = 0
    for day in calendar:
        mult = cfg.multiplier(day)
        for hour in range(24):
            stamp = f"{day.isoformat()}T{hour:02d}Z"
            for d, machine_id, m in machines:
                jh, ja = 1 + JITTER * (2 * power_u[i] - 1)
                jt, ji = 1 + JITTER * (2 * alloc_u[i] - 1)
                i += 1
                # repr keeps full precision and is still byte-stable
                p_host = float(m.p_host_w * jh)
                p_accel = float(m.p_accel_w * ja)
                t_total = 1.0 if m.allocated_fraction == 1.0 else min(1.0, float(m.allocated_fraction * jt))
                t_idle = min(t_total, float(t_total * m.idle_fraction * ji))
                dc = _dc_id(d)
                power_lines.append(f"{machine_id},{dc},{stamp},{p_host!r},{p_accel!r}")
                alloc_lines.append(
                    f"{machine_id},{m.model_id},job-{m.model_id}-{dc},{stamp},"
                    f"{t_total!r},{t_idle!r},{float(m.idle_power_w)!r}"
                )
                key = (m.model_id, dc, day)
                prompts[key] = prompts.get(key, 0.0) + (
                    m.prompts_per_machine_hour * t_total * util[d] * mult
                )

    prompt_lines = [",".join(PROMPT_HEADER)]
    for (model_id, dc, day), q in sorted(prompts.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
        prompt_lines.append(f"{model_id},{dc},{day.isoformat()},{int(round(q))}")
    machine_lines = [",".join(MACHINE_HEADER)]
    machine_lines += [f"{mid},{m.hardware_class},{_dc_id(d)}" for d, mid, m in machines]

    return {
        BUNDLE_FILES["power"]: "\n".join(power_lines) + "\n",
        BUNDLE_FILES["alloc"]: "\n".join(alloc_lines) + "\n",
        BUNDLE_FILES["prompts"]: "\n".join(prompt_lines) + "\n",
        BUNDLE_FILES["machines"]: "\n".join(machine_lines) + "\n",
        BUNDLE_FILES["factors"]: json.dumps(factor_document(cfg), indent=2, sort_keys=True) + "\n",
    }


def write_bundle(files: Mapping[str, str], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return out


# --- calibration ------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentTargets:
    """Per-prompt energy (Wh) of each comprehensive component."""

    accel: float
    host: float
    idle: float
    overhead: float

    @property
    def total(self) -> float:
        return self.accel + self.host + self.idle + self.overhead


REFERENCE_TARGETS = ComponentTargets(accel=0.14, host=0.06, idle=0.02, overhead=0.02)
REFERENCE_EXISTING = 0.10
REFERENCE_SCOPE1_3 = 0.010


def _utilization_spread(n: int, ratio: float, fraction: float = 0.10) -> tuple[float, ...]:
    """Per-DC prompt-rate multipliers with mean 1 whose top ``fraction`` sits at ``ratio``."""
    if ratio < 1.0 - 1e-12:
        raise ConfigError("existing-boundary target exceeds fleet accelerator energy per prompt")
    if abs(ratio - 1.0) <= 1e-12:
        return (1.0,) * n
    k = selection_size(n, fraction)
    if k >= n:
        raise ConfigError(f"{n} datacenter(s) cannot separate the top {fraction:.0%} from the rest")
    rest = n - k
    m = (n - k * ratio) / rest
    if m <= 0:
        raise ConfigError("existing-boundary target too far below the fleet average")
    spread = min(0.2, 0.5 * (ratio - m) / m)
    if rest == 1:
        others = [m]
    else:
        others = [m * (1 + spread * (2 * j / (rest - 1) - 1)) for j in range(rest)]
    return tuple([ratio] * k + sorted(others, reverse=True))


def calibrate_table1(
    targets: ComponentTargets = REFERENCE_TARGETS,
    *,
    existing: float | None = REFERENCE_EXISTING,
    scope1_3: float = REFERENCE_SCOPE1_3,
    seed: int = 42,
    start_date: dt.date = dt.date(2025, 5, 1),
    days: int = 7,
    datacenters: int = 10,
    machines_per_dc: int = 2,
    model_id: str = "chat-text",
    hardware_class: str = "accel-v1",
) -> ScenarioConfig:
    """Scenario whose comprehensive per-prompt components hit ``targets``.

    Solves the per-hour energy equations for one model at nominal 2 kW:
    PUE = 1 + overhead / IT, host:accel power = host:accel target,
    idle_power * idle_fraction = P * idle / IT, and a prompt rate of P / IT
    per machine-hour. ``existing`` sets the utilization of the top decile
    of DCs; ``scope1_3`` sets the embodied rate per machine-hour.
    """
    a, h, i, o = targets.accel, targets.host, targets.idle, targets.overhead
    if min(a, h, i, o) < 0:
        raise ConfigError("targets must be non-negative")
    it = a + h + i
    if it <= 0:
        raise ConfigError("targets imply zero IT energy")
    if a + h <= 0:
        raise ConfigError("targets imply zero active energy")
    idle_share = i / it
    # same worst-case bound validate_config enforces
    if idle_share * (1 + JITTER) >= (1 - JITTER):
        raise ConfigError("idle share too large to keep idle energy below measured energy")
    p = NOMINAL_MACHINE_POWER_W
    if idle_share > 0:
        idle_fraction = max(idle_share, MIN_IDLE_FRACTION)
        idle_power = p * idle_share / idle_fraction
    else:
        idle_fraction, idle_power = 0.0, 0.0
    rate = p / it
    pue = 1.0 + o / it
    util = (1.0,) * datacenters if existing is None else _utilization_spread(
        datacenters, a / existing if existing > 0 else math.inf
    )
    embodied = scope1_3 * rate
    model = ModelSpec(
        model_id=model_id,
        hardware_class=hardware_class,
        p_host_w=p * h / (a + h),
        p_accel_w=p * a / (a + h),
        prompts_per_machine_hour=rate,
        idle_fraction=idle_fraction,
        idle_power_w=idle_power,
    )
    factor_years = {
        str(y): dict(f, embodied_g_per_machine_hour={hardware_class: embodied})
        for y, f in PUBLISHED_FACTORS.items()
    }
    return ScenarioConfig(
        seed=seed,
        start_date=start_date,
        days=days,
        datacenters=datacenters,
        machines_per_dc=machines_per_dc,
        models=(model,),
        pue_per_dc=(pue,) * datacenters,
        dc_utilization=util,
        factor_years=factor_years,
    )


def trend_config(
    energy_reduction: float = 33.0,
    scope1_3_reduction: float = 36.0,
    *,
    start_month: tuple[int, int] = (2024, 5),
    months: int = 13,
    days_per_month: int = 2,
    base: ScenarioConfig | None = None,
) -> ScenarioConfig:
    """Monthly efficiency ramp ending at the reference calibration.

    Prompts per machine-hour grow geometrically by ``energy_reduction`` from
    the first to the last month. The older factor year gets an embodied rate
    raised by ``scope1_3_reduction / energy_reduction`` so the embodied
    emissions per prompt fall by ``scope1_3_reduction`` overall.
    """
    if months < 2:
        raise ConfigError("a trend needs at least two months")
    if energy_reduction <= 0 or scope1_3_reduction <= 0:
        raise ConfigError("reductions must be positive")
    y, m = start_month
    start = dt.date(y, m, 1)
    ly, lm = y + (m - 1 + months - 1) // 12, (m - 1 + months - 1) % 12 + 1
    end = dt.date(ly, lm, days_per_month)
    base = base or calibrate_table1(start_date=start)
    steps = months - 1
    mults = tuple(energy_reduction ** ((k - steps) / steps) for k in range(months))
    years = sorted(int(k) for k in base.factor_years)
    last_year = ly - 1
    factor_years = {}
    for year in years:
        entry = dict(base.factor_years[str(year)])
        if year < last_year:
            scale = scope1_3_reduction / energy_reduction
            entry["embodied_g_per_machine_hour"] = {
                hw: r * scale for hw, r in entry["embodied_g_per_machine_hour"].items()
            }
        factor_years[str(year)] = entry
    return replace(
        base,
        start_date=start,
        days=(end - start).days + 1,
        days_per_month=days_per_month,
        monthly_efficiency_multiplier=mults,
        factor_years=factor_years,
    )


def random_config(seed: int, max_machine_hours: int = 10_000) -> ScenarioConfig:
    """Small random scenario for oracle comparisons."""
    rng = np.random.default_rng(seed)
    n_models = int(rng.integers(1, 5))
    models = []
    for j in range(n_models):
        p_host = float(rng.uniform(0, 800))
        p_accel = float(rng.uniform(50, 3000))
        idle = float(rng.choice([0.0, rng.uniform(0, 0.6)]))
        max_idle_power = 0.8 * (p_host + p_accel) / max(idle * (1 + JITTER), 1e-9)
        models.append(
            ModelSpec(
                model_id=f"model-{j}",
                hardware_class=f"hw-{j % 2}",
                p_host_w=p_host,
                p_accel_w=p_accel,
                prompts_per_machine_hour=float(rng.uniform(1, 5000)),
                idle_fraction=idle,
                idle_power_w=float(rng.uniform(0, min(max_idle_power, p_host + p_accel))) if idle else 0.0,
                allocated_fraction=float(rng.choice([1.0, rng.uniform(0.3, 1.0)])),
            )
        )
    datacenters = int(rng.integers(1, 5))
    machines_per_dc = int(rng.integers(1, 4))
    max_days = max(1, max_machine_hours // (24 * datacenters * machines_per_dc))
    days = int(rng.integers(1, min(4, max_days) + 1))
    start = dt.date(2024, 1, 1) + dt.timedelta(days=int(rng.integers(0, 700)))
    years = {start.year - 1, (start + dt.timedelta(days=days)).year - 1}
    factor_years = {
        str(y): {
            "wue_l_per_kwh": float(rng.uniform(0, 2)),
            "ef_mb_g_per_kwh": float(rng.uniform(0, 500)),
            "embodied_g_per_machine_hour": {
                f"hw-{k}": float(rng.uniform(0, 200)) for k in range(2)
            },
        }
        for y in sorted(years)
    }
    return ScenarioConfig(
        seed=int(rng.integers(0, 2**31)),
        start_date=start,
        days=days,
        datacenters=datacenters,
        machines_per_dc=machines_per_dc,
        models=tuple(models),
        pue_per_dc=tuple(float(x) for x in rng.uniform(1.0, 1.6, datacenters)),
        dc_utilization=tuple(float(x) for x in rng.uniform(0.5, 1.5, datacenters)),
        factor_years=factor_years,
    )


# --- oracles ---------------------------------------------------------------------


def _text(bundle: Mapping[str, str] | str | Path, name: str) -> str:
    if isinstance(bundle, Mapping):
        return bundle[name]
    return (Path(bundle) / name).read_text(encoding="utf-8")


def _table(text: str) -> list[list[str]]:
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln]
    return [ln.split(",") for ln in lines[1:]]


def oracle_energy(
    bundle: Mapping[str, str] | str | Path,
    model_id: str = ALL_MODELS,
    window: Window | None = None,
) -> EnergyComponents:
    """Naive re-derivation of the energy components from raw bundle text.

    Parses with plain string splitting, walks allocations in file order and
    accumulates in 40-digit decimal arithmetic.
    """
    power = {}
    for machine, campus, hour, p_host, p_accel in _table(_text(bundle, BUNDLE_FILES["power"])):
        power[(machine, hour)] = (campus, p_host, p_accel)
    campus_of = {}
    hw_of = {}
    for machine, hw, campus in _table(_text(bundle, BUNDLE_FILES["machines"])):
        campus_of[machine] = campus
        hw_of[machine] = hw
    factors = json.loads(_text(bundle, BUNDLE_FILES["factors"]))

    with localcontext() as ctx:
        ctx.prec = 40
        total = overhead = idle_sum = host_sum = accel_sum = hours_sum = Decimal(0)
        by_hw: dict[str, Decimal] = {}
        for machine, model, _job, hour, t_total, t_idle, p_idle in _table(
            _text(bundle, BUNDLE_FILES["alloc"])
        ):
            day = dt.date(int(hour[0:4]), int(hour[5:7]), int(hour[8:10]))
            if model_id != ALL_MODELS and model != model_id:
                continue
            if window is not None and not (window.start <= day <= window.end):
                continue
            if (machine, hour) not in power:
                raise JoinError(f"no power sample for ({machine}, {hour})")
            if machine not in campus_of:
                raise JoinError(f"machine {machine} missing from machines.csv")
            _campus, ph, pa = power[(machine, hour)]
            pue = Decimal(repr(factors[str(day.year - 1)]["pue_by_campus"][campus_of[machine]]))
            ph, pa = Decimal(ph), Decimal(pa)
            tt, ti, pi = Decimal(t_total), Decimal(t_idle), Decimal(p_idle)
            p_total = ph + pa
            measured = p_total * tt
            idle = pi * ti
            if idle > measured:
                raise TelemetryError(f"idle energy exceeds measured energy for {machine} at {hour}")
            active = measured - idle
            total += measured * pue
            overhead += measured * (pue - 1)
            idle_sum += idle
            if p_total > 0:
                host_sum += active * ph / p_total
                accel_sum += active * pa / p_total
            hours_sum += tt
            by_hw[hw_of[machine]] = by_hw.get(hw_of[machine], Decimal(0)) + tt
    return EnergyComponents(
        float(total), float(overhead), float(idle_sum), float(host_sum), float(accel_sum),
        machine_hours=float(hours_sum),
        machine_hours_by_hw={k: float(v) for k, v in sorted(by_hw.items())},
        window=window,
        model_id=model_id,
    )


def oracle_median(per_model: Iterable[tuple[str, float, int]]) -> float:
    """Energy of the ceil(Q/2)-th prompt after expanding every prompt and sorting."""
    prompts: list[float] = []
    for _model_id, energy, q in per_model:
        prompts.extend([energy] * q)
    if not prompts:
        raise FleetmeterError("no prompts")
    prompts.sort()
    return prompts[math.ceil(len(prompts) / 2) - 1]
