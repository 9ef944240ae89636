"""``fleetmeter`` command line.

Exit status: 0 success, 1 validation or computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path
from typing import Sequence

from fleetmeter import __version__
from fleetmeter.aggregate import (
    MedianReport,
    fleet_daily_medians,
    fleet_median,
    month_windows,
    trend_reductions,
    window_factors,
)
from fleetmeter.boundary import (
    boundary_ratio,
    boundary_scaling_factor,
    existing_boundary_window,
)
from fleetmeter.energy import (
    ALL_MODELS,
    COMPREHENSIVE,
    EXISTING,
    Fleet,
    PerPromptEnergy,
    cross_check,
    per_prompt_energy,
)
from fleetmeter.errors import FleetmeterError, IngestError
from fleetmeter.footprint import (
    emissions_per_prompt,
    fleet_weighted_factor,
    water_per_prompt,
)
from fleetmeter.ingest import BUNDLE_FILES, load_bundle, parse_day
from fleetmeter.records import Window
from fleetmeter.report import FORMATS, ReportDocument, display
from fleetmeter.synthfleet import (
    ScenarioConfig,
    calibrate_table1,
    generate_scenario,
    write_bundle,
)

COMPONENTS = (
    ("active_accel", "e_active_accel"),
    ("active_host", "e_active_host"),
    ("idle", "e_idle"),
    ("overhead", "e_overhead"),
)


class UsageError(Exception):
    pass


def _month(value: str) -> tuple[int, int]:
    try:
        d = dt.datetime.strptime(value, "%Y-%m")
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad month {value!r}, expected YYYY-MM") from None
    return d.year, d.month


def _day(value: str) -> dt.date:
    try:
        return parse_day(value)
    except IngestError:
        raise argparse.ArgumentTypeError(f"bad date {value!r}, expected YYYY-MM-DD") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetmeter",
        description="Per-prompt energy, emissions and water accounting for AI serving fleets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def bundle_command(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, allow_abbrev=False)
        p.add_argument("bundle", type=Path, help="directory holding power.csv, alloc.csv, "
                       "prompts.csv, machines.csv and factors.json")
        p.add_argument("--format", choices=FORMATS, default="table")
        return p

    bundle_command("validate", "check every file and cross-file join")

    for name, help in (
        ("compute", "per-prompt energy decomposition"),
        ("compare-boundaries", "existing versus comprehensive boundary"),
    ):
        p = bundle_command(name, help)
        p.add_argument("--model", default=ALL_MODELS)
        p.add_argument("--from", dest="start", type=_day)
        p.add_argument("--to", dest="end", type=_day)
        if name == "compute":
            p.add_argument("--boundary", choices=(COMPREHENSIVE, EXISTING), default=COMPREHENSIVE)

    p = bundle_command("median", "median-prompt energy, emissions and water for a month")
    p.add_argument("--month", type=_month, required=True)
    p.add_argument("--daily", action="store_true", help="one row per day")

    p = bundle_command("trend", "monthly median series and first/last reduction factors")
    p.add_argument("--from-month", type=_month, required=True)
    p.add_argument("--to-month", type=_month, required=True)

    p = sub.add_parser("synth", help="generate a synthetic bundle", allow_abbrev=False)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--calibrate-table1", action="store_true")
    p.add_argument("--format", choices=FORMATS, default="table")
    return parser


# --- helpers ----------------------------------------------------------------------


def _window(fleet: Fleet, start: dt.date | None, end: dt.date | None) -> Window:
    days = fleet.days()
    if start is None or end is None:
        if not days:
            raise FleetmeterError("empty window")
        start = start or days[0]
        end = end or days[-1]
    if end < start:
        raise UsageError(f"--to {end} precedes --from {start}")
    return Window(start, end)


def _fleet_pue(fleet: Fleet, window: Window, model_id: str) -> float | None:
    """PUE averaged over campuses, weighted by the IT energy each spent on serving."""
    weights: dict[str, float] = {}
    for (campus, m), comp in fleet.grouped(lambda h: (h.campus_id, h.model_id), window).items():
        if model_id in (ALL_MODELS, m):
            weights[campus] = weights.get(campus, 0.0) + comp.e_total - comp.e_overhead
    if not weights or sum(weights.values()) <= 0:
        return None
    fs = window_factors(fleet, window)
    return fleet_weighted_factor({c: fs.pue(c) for c in weights}, weights)


def _component_rows(energy: PerPromptEnergy, absolute) -> list[dict]:
    rows = []
    headline = energy.headline
    for label, attr in COMPONENTS:
        excluded = energy.boundary == EXISTING and attr != "e_active_accel"
        value = getattr(energy, attr)
        row = {
            "component": label,
            "wh_per_prompt": value,
            "wh": getattr(absolute, attr),
            "share": None if excluded or headline == 0 else value / headline,
            "excluded": excluded,
        }
        row["display"] = display({"wh_per_prompt": value})
        rows.append(row)
    total_abs = absolute.e_active_accel if energy.boundary == EXISTING else absolute.e_total
    rows.append({
        "component": "total",
        "wh_per_prompt": headline,
        "wh": total_abs,
        "share": 1.0 if headline else None,
        "excluded": False,
        "display": display({"wh_per_prompt": headline}),
    })
    return rows


def _footprint_summary(energy: PerPromptEnergy, components, fs, q: int) -> dict:
    em = emissions_per_prompt(energy, fs, components.machine_hours_by_hw, q)
    water = water_per_prompt(energy, fs)
    return {
        "scope2_mb_g_per_prompt": em.scope2_mb,
        "scope1_3_g_per_prompt": em.scope1_3,
        "emissions_g_per_prompt": em.total,
        "water_ml_per_prompt": water.consumption_ml,
    }


# --- commands ---------------------------------------------------------------------


def cmd_validate(args) -> tuple[ReportDocument, int]:
    errors: dict[str, list] = {}
    bundle = load_bundle(args.bundle, errors)
    rows = []
    for name in BUNDLE_FILES.values():
        for exc in errors.get(name, []):
            rows.append({"file": name, "line": getattr(exc, "line", None),
                         "field": getattr(exc, "field", None), "message": getattr(exc, "reason", str(exc))})
    for file, message in cross_check(bundle):
        rows.append({"file": file, "line": None, "field": None, "message": message})
    doc = ReportDocument(
        command="validate",
        rows=rows,
        columns=["file", "line", "field", "message"],
        summary={
            "ok": not rows,
            "problems": len(rows),
            "power_samples": len(bundle.samples),
            "allocations": len(bundle.allocations),
            "prompt_tallies": len(bundle.tallies),
            "machines": len(bundle.machines),
            "factor_years": sorted(bundle.factors),
        },
    )
    return doc, 0 if not rows else 1


def cmd_compute(args) -> tuple[ReportDocument, int]:
    fleet = Fleet(load_bundle(args.bundle))
    window = _window(fleet, args.start, args.end)
    q = fleet.prompts(window, args.model)
    comp = fleet.components(window, args.model)
    if q == 0 and comp.machine_hours == 0:
        raise FleetmeterError("empty window")
    fs = window_factors(fleet, window)
    if args.boundary == EXISTING:
        result = existing_boundary_window(fleet, window, args.model)
        energy, absolute = result.energy, result.components
        sample = "top 10% most efficient DC-days"
        selected = [r.as_dict() for r in result.selected]
    else:
        energy, absolute = per_prompt_energy(comp, q, COMPREHENSIVE), comp
        sample = "fleet average"
        selected = None
    summary = {
        "model_id": args.model,
        "boundary": energy.boundary,
        "utilization_sample": sample,
        "q": energy.q,
        "machine_hours": absolute.machine_hours,
        "headline_wh_per_prompt": energy.headline,
        "fleet_weighted_pue": _fleet_pue(fleet, window, args.model),
    }
    summary.update(_footprint_summary(energy, absolute, fs, energy.q))
    if selected is not None:
        summary["selected_dc_days"] = selected
    doc = ReportDocument(
        command="compute",
        window=window.as_dict(),
        rows=_component_rows(energy, absolute),
        summary=summary,
        factors_used=fs.summary(),
        columns=["component", "wh_per_prompt", "wh", "share", "excluded"],
    )
    return doc, 0


def cmd_compare(args) -> tuple[ReportDocument, int]:
    fleet = Fleet(load_bundle(args.bundle))
    window = _window(fleet, args.start, args.end)
    q = fleet.prompts(window, args.model)
    comp = fleet.components(window, args.model)
    if q == 0:
        raise FleetmeterError("empty window")
    fs = window_factors(fleet, window)
    comprehensive = per_prompt_energy(comp, q, COMPREHENSIVE)
    existing = existing_boundary_window(fleet, window, args.model)
    rows = []
    for label, energy, absolute, sample in (
        ("existing", existing.energy, existing.components, "top 10% most efficient DCs"),
        ("comprehensive", comprehensive, comp, "fleet average"),
    ):
        row = {
            "approach": label,
            "active_accel": energy.e_active_accel,
            "utilization_sample": sample,
            "active_host": energy.e_active_host,
            "idle": energy.e_idle,
            "overhead": energy.e_overhead,
            "total": energy.headline,
            "excluded": ["active_host", "idle", "overhead"] if label == "existing" else [],
        }
        row.update(_footprint_summary(energy, absolute, fs, energy.q))
        row["display"] = display({k: v for k, v in row.items() if isinstance(v, float)})
        rows.append(row)
    summary = {
        "model_id": args.model,
        "comprehensive_to_existing_ratio": boundary_ratio(comprehensive, existing.energy),
        "accelerator_scaling_factor": boundary_scaling_factor(comprehensive, comprehensive.e_active_accel),
    }
    doc = ReportDocument(
        command="compare-boundaries",
        window=window.as_dict(),
        rows=rows,
        summary=summary,
        factors_used=fs.summary(),
        columns=["approach", "active_accel", "utilization_sample", "active_host", "idle",
                 "overhead", "total", "scope2_mb_g_per_prompt", "scope1_3_g_per_prompt",
                 "emissions_g_per_prompt", "water_ml_per_prompt"],
    )
    return doc, 0


def _median_row(label: str, report: MedianReport) -> dict:
    e = report.energy
    row = {
        "period": label,
        "median_model_id": report.median_model_id,
        "energy_wh": e.e_total,
        "active_accel": e.e_active_accel,
        "active_host": e.e_active_host,
        "idle": e.e_idle,
        "overhead": e.e_overhead,
        "scope2_mb_g": report.emissions.scope2_mb,
        "scope1_3_g": report.emissions.scope1_3,
        "emissions_g": report.emissions.total,
        "water_ml": report.water.consumption_ml,
        "q_total": report.total_q,
        "mean_energy_wh": report.mean_energy_per_prompt,
        "factors_year": report.factors_year,
    }
    row["display"] = display({k: v for k, v in row.items() if isinstance(v, float)})
    return row


MEDIAN_COLUMNS = ["period", "median_model_id", "energy_wh", "active_accel", "active_host", "idle",
                  "overhead", "scope2_mb_g", "scope1_3_g", "emissions_g", "water_ml", "q_total",
                  "mean_energy_wh", "factors_year"]


def cmd_median(args) -> tuple[ReportDocument, int]:
    fleet = Fleet(load_bundle(args.bundle))
    window = Window.month(*args.month)
    label = f"{args.month[0]:04d}-{args.month[1]:02d}"
    summary: dict = {}
    if args.daily:
        rows = [_median_row(r.window.start.isoformat(), r) for r in fleet_daily_medians(fleet, window)]
    else:
        report = fleet_median(fleet, window)
        rows = [_median_row(label, report)]
        summary = {
            "method": "pooled-month",
            "ranking": [r.as_dict() for r in report.ranking],
            "excluded_models": list(report.excluded_models),
        }
    fs = window_factors(fleet, window)
    doc = ReportDocument(
        command="median",
        window=window.as_dict(),
        rows=rows,
        summary=summary,
        factors_used=fs.summary(),
        columns=MEDIAN_COLUMNS,
    )
    return doc, 0


def cmd_trend(args) -> tuple[ReportDocument, int]:
    fleet = Fleet(load_bundle(args.bundle))
    windows = month_windows(args.from_month, args.to_month)
    have = set(fleet.days())
    series = []
    for w in windows:
        if not any(w.contains(d) for d in have):
            continue
        series.append((f"{w.start:%Y-%m}", fleet_median(fleet, w)))
    trend = trend_reductions(series)
    summary = trend.as_dict()
    summary["months"] = len(series)
    doc = ReportDocument(
        command="trend",
        window={"from": windows[0].start.isoformat(), "to": windows[-1].end.isoformat()},
        rows=[_median_row(label, r) for label, r in series],
        summary=summary,
        factors_used={
            str(y): fleet.factors[y].summary()
            for y in sorted({r.factors_year for _, r in series if r.factors_year is not None})
        },
        columns=MEDIAN_COLUMNS,
    )
    return doc, 0


def cmd_synth(args) -> tuple[ReportDocument, int]:
    base = None
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise FleetmeterError(f"cannot read {args.config}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise FleetmeterError(f"config is not valid JSON: {exc}") from None
        base = ScenarioConfig.from_dict(raw)
    if args.calibrate_table1:
        kwargs = {}
        if base is not None:
            kwargs = dict(seed=base.seed, start_date=base.start_date, days=base.days,
                          datacenters=base.datacenters, machines_per_dc=base.machines_per_dc)
        config = calibrate_table1(**kwargs)
    elif base is not None:
        config = base
    else:
        raise UsageError("synth needs --config, --calibrate-table1, or both")
    files = generate_scenario(config)
    out = write_bundle(files, args.out)
    (out / "scenario.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    rows = [{"file": name, "bytes": len(text.encode("utf-8"))} for name, text in sorted(files.items())]
    doc = ReportDocument(
        command="synth",
        rows=rows,
        summary={"out": str(out), "seed": config.seed, "days": len(config.calendar()),
                 "datacenters": config.datacenters, "machines_per_dc": config.machines_per_dc},
        columns=["file", "bytes"],
    )
    return doc, 0


COMMANDS = {
    "validate": cmd_validate,
    "compute": cmd_compute,
    "compare-boundaries": cmd_compare,
    "median": cmd_median,
    "trend": cmd_trend,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        doc, status = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fleetmeter: error: {exc}", file=sys.stderr)
        return 2
    except (FleetmeterError, OSError) as exc:
        print(f"fleetmeter: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(doc.render(args.format))
    return status


if __name__ == "__main__":
    sys.exit(main())
