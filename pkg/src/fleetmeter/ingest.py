"""Parsing and validation of the bundle files.

Every parser accepts a string, an open text file, or any iterable of lines,
and returns records in file order. Passing an ``errors`` list switches a
parser to collect-all mode: bad lines are recorded and skipped instead of
raising on the first one.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Iterator, TextIO, Union

from fleetmeter.errors import IngestError
from fleetmeter.records import (
    UTC,
    AllocationRecord,
    Bundle,
    FactorSet,
    MachineSpec,
    PowerSample,
    PromptTally,
)

Source = Union[str, TextIO, Iterable[str]]

POWER_HEADER = ("machine_id", "campus_id", "hour", "p_host_w", "p_accel_w")
ALLOC_HEADER = ("machine_id", "model_id", "job_id", "hour", "t_total_h", "t_idle_h", "p_idle_w")
PROMPT_HEADER = ("model_id", "datacenter_id", "day", "q")
MACHINE_HEADER = ("machine_id", "hardware_class", "campus_id")

BUNDLE_FILES = {
    "power": "power.csv",
    "alloc": "alloc.csv",
    "prompts": "prompts.csv",
    "machines": "machines.csv",
    "factors": "factors.json",
}

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\Z")
_INTEGER = re.compile(r"\+?\d+\Z")
_HOUR = re.compile(r"(\d{4})-(\d{2})-(\d{2})T(\d{2})Z\Z")
_DAY = re.compile(r"(\d{4})-(\d{2})-(\d{2})\Z")
_YEAR = re.compile(r"\d{4}\Z")

# tolerance when checking that the allocations of one machine-hour fit in an hour
_HOUR_SLACK = 1e-9


def _lines(source: Source) -> Iterator[str]:
    if isinstance(source, str):
        return iter(io.StringIO(source, newline=""))
    return iter(source)


def _rows(source: Source, header: tuple[str, ...]) -> Iterator[tuple[int, list[str]]]:
    reader = csv.reader(_lines(source))
    try:
        first = next(reader)
    except StopIteration:
        raise IngestError("missing header", line=1) from None
    if first and first[0].startswith("\ufeff"):
        first[0] = first[0][1:]
    if tuple(first) != header:
        raise IngestError(f"bad header {','.join(first)!r}, expected {','.join(header)!r}", line=1)
    for row in reader:
        if row:
            yield reader.line_num, row


def _ident(value: str, line: int, name: str) -> str:
    if not value or value != value.strip():
        raise IngestError("empty or padded identifier", line, name)
    return value


def _number(value: str, line: int, name: str) -> float:
    if not _NUMBER.match(value):
        raise IngestError(f"unparsable number {value!r}", line, name)
    x = float(value)
    if not math.isfinite(x):
        raise IngestError(f"non-finite number {value!r}", line, name)
    return x


def _power(value: str, line: int, name: str) -> float:
    x = _number(value, line, name)
    if x < 0:
        raise IngestError("negative power", line, name)
    return x


def parse_hour(value: str, line: int | None = None, name: str = "hour") -> dt.datetime:
    m = _HOUR.match(value)
    if not m:
        raise IngestError(f"bad hour {value!r}, expected YYYY-MM-DDTHHZ", line, name)
    try:
        return dt.datetime(*(int(g) for g in m.groups()), tzinfo=UTC)
    except ValueError as exc:
        raise IngestError(f"bad hour {value!r}: {exc}", line, name) from None


def parse_day(value: str, line: int | None = None, name: str = "day") -> dt.date:
    m = _DAY.match(value)
    if not m:
        raise IngestError(f"bad day {value!r}, expected YYYY-MM-DD", line, name)
    try:
        return dt.date(*(int(g) for g in m.groups()))
    except ValueError as exc:
        raise IngestError(f"bad day {value!r}: {exc}", line, name) from None


def format_hour(hour: dt.datetime) -> str:
    return hour.strftime("%Y-%m-%dT%HZ")


def _collect(
    source: Source,
    header: tuple[str, ...],
    build: Callable[[int, list[str]], object],
    key: Callable[[object], tuple] | None,
    errors: list[IngestError] | None,
) -> list:
    out = []
    seen: dict[tuple, int] = {}
    for line, row in _rows(source, header):
        try:
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} columns, got {len(row)}", line)
            record = build(line, row)
            if key is not None:
                k = key(record)
                if k in seen:
                    raise IngestError(f"duplicate key {k!r} (first seen on line {seen[k]})", line)
                seen[k] = line
        except IngestError as exc:
            if errors is None:
                raise
            errors.append(exc)
            continue
        out.append(record)
    return out


def _build_power(line: int, row: list[str]) -> PowerSample:
    machine_id, campus_id, hour, p_host, p_accel = row
    return PowerSample(
        machine_id=_ident(machine_id, line, "machine_id"),
        campus_id=_ident(campus_id, line, "campus_id"),
        hour=parse_hour(hour, line),
        p_host=_power(p_host, line, "p_host"),
        p_accel=_power(p_accel, line, "p_accel"),
    )


def _build_alloc(line: int, row: list[str]) -> AllocationRecord:
    machine_id, model_id, job_id, hour, t_total, t_idle, p_idle = row
    rec = AllocationRecord(
        machine_id=_ident(machine_id, line, "machine_id"),
        model_id=_ident(model_id, line, "model_id"),
        job_id=_ident(job_id, line, "job_id"),
        hour=parse_hour(hour, line),
        t_total=_number(t_total, line, "t_total"),
        t_idle=_number(t_idle, line, "t_idle"),
        p_idle=_power(p_idle, line, "p_idle"),
    )
    if not 0 < rec.t_total <= 1.0:
        raise IngestError("t_total outside (0, 1] hours", line, "t_total")
    if rec.t_idle < 0:
        raise IngestError("negative t_idle", line, "t_idle")
    if rec.t_idle > rec.t_total:
        raise IngestError("t_idle exceeds t_total", line, "t_idle")
    return rec


def _build_tally(line: int, row: list[str]) -> PromptTally:
    model_id, datacenter_id, day, q = row
    if not _INTEGER.match(q):
        raise IngestError(f"prompt count {q!r} is not a non-negative integer", line, "q")
    return PromptTally(
        model_id=_ident(model_id, line, "model_id"),
        datacenter_id=_ident(datacenter_id, line, "datacenter_id"),
        day=parse_day(day, line),
        q=int(q),
    )


def _build_machine(line: int, row: list[str]) -> MachineSpec:
    machine_id, hardware_class, campus_id = row
    return MachineSpec(
        machine_id=_ident(machine_id, line, "machine_id"),
        hardware_class=_ident(hardware_class, line, "hardware_class"),
        campus_id=_ident(campus_id, line, "campus_id"),
    )


def parse_power_samples(source: Source, errors: list[IngestError] | None = None) -> list[PowerSample]:
    return _collect(source, POWER_HEADER, _build_power, lambda r: (r.machine_id, r.hour), errors)


def parse_allocations(
    source: Source, errors: list[IngestError] | None = None
) -> list[AllocationRecord]:
    """Parse ``alloc.csv``.

    A machine may appear under several jobs in the same hour, but the
    allocated times of one machine-hour must not add up to more than an hour.
    """
    records = _collect(
        source,
        ALLOC_HEADER,
        _build_alloc,
        lambda r: (r.machine_id, r.job_id, r.hour),
        errors,
    )
    used: dict[tuple, float] = {}
    over: set[tuple] = set()
    for rec in records:
        k = (rec.machine_id, rec.hour)
        used[k] = used.get(k, 0.0) + rec.t_total
        if used[k] > 1.0 + _HOUR_SLACK and k not in over:
            over.add(k)
            exc = IngestError(
                f"allocations of machine {rec.machine_id} at {format_hour(rec.hour)} "
                "exceed one hour",
                field="t_total",
            )
            if errors is None:
                raise exc
            errors.append(exc)
    if over:
        records = [r for r in records if (r.machine_id, r.hour) not in over]
    return records


def parse_prompt_tallies(
    source: Source, errors: list[IngestError] | None = None
) -> list[PromptTally]:
    return _collect(
        source,
        PROMPT_HEADER,
        _build_tally,
        lambda r: (r.model_id, r.datacenter_id, r.day),
        errors,
    )


def parse_machines(source: Source, errors: list[IngestError] | None = None) -> list[MachineSpec]:
    return _collect(source, MACHINE_HEADER, _build_machine, lambda r: (r.machine_id,), errors)


# --- factors.json -----------------------------------------------------------

_FACTOR_FIELDS = {
    "pue_by_campus",
    "wue_l_per_kwh",
    "ef_mb_g_per_kwh",
    "ef_lb_g_per_kwh",
    "embodied_g_per_machine_hour",
}
_REQUIRED_FACTOR_FIELDS = _FACTOR_FIELDS - {"ef_lb_g_per_kwh"}


def _factor_number(value: object, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise IngestError(f"{where} must be a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise IngestError(f"{where} must be finite")
    return x


def _factor_map(value: object, where: str, minimum: float, what: str) -> dict[str, float]:
    if not isinstance(value, dict):
        raise IngestError(f"{where} must be an object")
    out = {}
    for k, v in value.items():
        x = _factor_number(v, f"{where}.{k}")
        if x < minimum:
            raise IngestError(f"{what} below {minimum} for {k!r} in {where}")
        out[k] = x
    return out


def load_factors(document: str | bytes | dict) -> dict[int, FactorSet]:
    """Load ``factors.json`` into ``{year: FactorSet}``."""
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise IngestError(f"factors document is not valid JSON: {exc}") from None
    else:
        data = document
    if not isinstance(data, dict):
        raise IngestError("factors document must be an object keyed by year")
    table = {}
    for key, entry in data.items():
        if not isinstance(key, str) or not _YEAR.match(key):
            raise IngestError(f"bad year key {key!r}, expected YYYY")
        if not isinstance(entry, dict):
            raise IngestError(f"factors for {key} must be an object")
        missing = sorted(_REQUIRED_FACTOR_FIELDS - entry.keys())
        if missing:
            raise IngestError(f"factors for {key} missing required field(s) {', '.join(missing)}")
        unknown = sorted(entry.keys() - _FACTOR_FIELDS)
        if unknown:
            raise IngestError(f"factors for {key} have unknown field(s) {', '.join(unknown)}")
        pue = _factor_map(entry["pue_by_campus"], f"{key}.pue_by_campus", 1.0, "PUE")
        wue = _factor_number(entry["wue_l_per_kwh"], f"{key}.wue_l_per_kwh")
        ef_mb = _factor_number(entry["ef_mb_g_per_kwh"], f"{key}.ef_mb_g_per_kwh")
        ef_lb = entry.get("ef_lb_g_per_kwh")
        if ef_lb is not None:
            ef_lb = _factor_number(ef_lb, f"{key}.ef_lb_g_per_kwh")
        embodied = _factor_map(
            entry["embodied_g_per_machine_hour"],
            f"{key}.embodied_g_per_machine_hour",
            0.0,
            "embodied rate",
        )
        for name, x in (("wue_l_per_kwh", wue), ("ef_mb_g_per_kwh", ef_mb), ("ef_lb_g_per_kwh", ef_lb)):
            if x is not None and x < 0:
                raise IngestError(f"{key}.{name} must be non-negative")
        year = int(key)
        table[year] = FactorSet(
            year=year,
            pue_by_campus=pue,
            wue=wue,
            ef_mb=ef_mb,
            ef_lb=ef_lb,
            embodied_rate_by_hw=embodied,
        )
    return dict(sorted(table.items()))


def dump_factors(table: dict[int, FactorSet]) -> str:
    doc = {}
    for year, fs in sorted(table.items()):
        entry = {
            "pue_by_campus": dict(sorted(fs.pue_by_campus.items())),
            "wue_l_per_kwh": fs.wue,
            "ef_mb_g_per_kwh": fs.ef_mb,
            "embodied_g_per_machine_hour": dict(sorted(fs.embodied_rate_by_hw.items())),
        }
        if fs.ef_lb is not None:
            entry["ef_lb_g_per_kwh"] = fs.ef_lb
        doc[str(year)] = entry
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- canonical serialization --------------------------------------------------


def _csv(header: tuple[str, ...], rows: Iterable[Iterable[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(r) for r in rows)
    return "\n".join(lines) + "\n"


def format_power_samples(samples: Iterable[PowerSample]) -> str:
    return _csv(
        POWER_HEADER,
        ((s.machine_id, s.campus_id, format_hour(s.hour), repr(s.p_host), repr(s.p_accel)) for s in samples),
    )


def format_allocations(allocs: Iterable[AllocationRecord]) -> str:
    return _csv(
        ALLOC_HEADER,
        (
            (a.machine_id, a.model_id, a.job_id, format_hour(a.hour), repr(a.t_total), repr(a.t_idle), repr(a.p_idle))
            for a in allocs
        ),
    )


def format_prompt_tallies(tallies: Iterable[PromptTally]) -> str:
    return _csv(PROMPT_HEADER, ((t.model_id, t.datacenter_id, t.day.isoformat(), str(t.q)) for t in tallies))


def format_machines(machines: Iterable[MachineSpec]) -> str:
    return _csv(MACHINE_HEADER, ((m.machine_id, m.hardware_class, m.campus_id) for m in machines))


# --- bundles ------------------------------------------------------------------


def thread_count() -> int | None:
    """Worker cap from ``FLEETMETER_THREADS``; ``None`` lets the executor decide."""
    raw = os.environ.get("FLEETMETER_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise IngestError(f"FLEETMETER_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise IngestError("FLEETMETER_THREADS must be >= 0")
    return n or None


def _read(path: Path) -> str:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read()


def load_bundle(directory: str | os.PathLike, errors: dict[str, list] | None = None) -> Bundle:
    """Parse the five files of a bundle directory.

    Files are parsed concurrently (capped by ``FLEETMETER_THREADS``); the
    result does not depend on the thread count. With ``errors`` given, every
    file is parsed in collect-all mode and failures are filed under the
    file name.
    """
    root = Path(directory)
    parsers = {
        "power": parse_power_samples,
        "alloc": parse_allocations,
        "prompts": parse_prompt_tallies,
        "machines": parse_machines,
    }

    def run(name: str):
        path = root / BUNDLE_FILES[name]
        sink = None if errors is None else errors.setdefault(BUNDLE_FILES[name], [])
        try:
            text = _read(path)
        except OSError as exc:
            err = IngestError(f"cannot read {path}: {exc.strerror or exc}")
            if sink is None:
                raise err from None
            sink.append(err)
            return [] if name != "factors" else {}
        try:
            if name == "factors":
                return load_factors(text)
            return parsers[name](text, sink)
        except IngestError as exc:
            if sink is None:
                raise
            sink.append(exc)
            return [] if name != "factors" else {}

    names = ["power", "alloc", "prompts", "machines", "factors"]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        results = dict(zip(names, pool.map(run, names)))
    return Bundle(
        samples=tuple(results["power"]),
        allocations=tuple(results["alloc"]),
        tallies=tuple(results["prompts"]),
        machines=tuple(results["machines"]),
        factors=results["factors"],
    )
