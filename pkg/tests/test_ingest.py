import datetime as dt
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import hour
from fleetmeter.errors import IngestError
from fleetmeter.ingest import (
    format_allocations,
    format_machines,
    format_power_samples,
    format_prompt_tallies,
    load_bundle,
    load_factors,
    parse_allocations,
    parse_machines,
    parse_power_samples,
    parse_prompt_tallies,
)
from fleetmeter.records import AllocationRecord, MachineSpec, PowerSample, PromptTally

POWER = "machine_id,campus_id,hour,p_host_w,p_accel_w\n"
ALLOC = "machine_id,model_id,job_id,hour,t_total_h,t_idle_h,p_idle_w\n"
PROMPTS = "model_id,datacenter_id,day,q\n"


def test_power_sample_fields():
    (s,) = parse_power_samples(POWER + "m1,dc-a,2025-05-01T00Z,400,1600\n")
    assert s == PowerSample("m1", "dc-a", hour("2025-05-01T00Z"), 400.0, 1600.0)
    assert s.p_total == 2000.0


def test_negative_power_names_line_and_field():
    with pytest.raises(IngestError) as info:
        parse_power_samples(POWER + "m1,dc-a,2025-05-01T00Z,-5,1600\n")
    assert str(info.value) == "negative power, line 2, field p_host"
    assert (info.value.line, info.value.field) == (2, "p_host")


def test_duplicate_power_key():
    text = POWER + "m1,dc-a,2025-05-01T00Z,1,2\nm1,dc-a,2025-05-01T00Z,3,4\n"
    with pytest.raises(IngestError, match="duplicate key") as info:
        parse_power_samples(text)
    assert info.value.line == 3


@pytest.mark.parametrize(
    "line, field",
    [
        ("m1,dc-a,2025-05-01T00Z,abc,1", "p_host"),
        ("m1,dc-a,2025-05-01T00Z,1,nan", "p_accel"),
        ("m1,dc-a,2025-05-01 00:00,1,1", "hour"),
        ("m1,dc-a,2025-02-30T00Z,1,1", "hour"),
        ("m1,dc-a,2025-05-01T00Z,1", None),
        (",dc-a,2025-05-01T00Z,1,1", "machine_id"),
    ],
)
def test_malformed_power_lines(line, field):
    with pytest.raises(IngestError) as info:
        parse_power_samples(POWER + line + "\n")
    assert info.value.line == 2
    assert info.value.field == field


def test_bad_header():
    with pytest.raises(IngestError, match="bad header"):
        parse_power_samples("machine,campus,hour,a,b\n")


def test_crlf_and_bom_accepted():
    text = "﻿" + POWER.replace("\n", "\r\n") + "m1,dc-a,2025-05-01T00Z,1.5,2\r\n"
    (s,) = parse_power_samples(text)
    assert s.p_host == 1.5


def test_allocation_fields():
    (a,) = parse_allocations(ALLOC + "m1,gem-s,j7,2025-05-01T00Z,1.0,0.25,300\n")
    assert a == AllocationRecord("m1", "gem-s", "j7", hour("2025-05-01T00Z"), 1.0, 0.25, 300.0)


def test_idle_above_total_rejected():
    with pytest.raises(IngestError, match="t_idle exceeds t_total") as info:
        parse_allocations(ALLOC + "m1,gem-s,j7,2025-05-01T00Z,0.5,0.6,300\n")
    assert info.value.line == 2


def test_total_above_one_hour_rejected():
    with pytest.raises(IngestError, match="t_total"):
        parse_allocations(ALLOC + "m1,gem-s,j7,2025-05-01T00Z,1.5,0.1,300\n")


def test_machine_hour_split_across_jobs_must_fit_the_hour():
    ok = ALLOC + "m1,a,j1,2025-05-01T00Z,0.5,0,1\nm1,b,j2,2025-05-01T00Z,0.5,0,1\n"
    assert len(parse_allocations(ok)) == 2
    with pytest.raises(IngestError, match="exceed one hour"):
        parse_allocations(ALLOC + "m1,a,j1,2025-05-01T00Z,0.6,0,1\nm1,b,j2,2025-05-01T00Z,0.5,0,1\n")


def test_header_only_is_empty():
    assert parse_allocations(ALLOC) == []


def test_prompt_tally_fields():
    (t,) = parse_prompt_tallies(PROMPTS + "gem-s,dc-a,2025-05-01,100000\n")
    assert t == PromptTally("gem-s", "dc-a", dt.date(2025, 5, 1), 100000)


@pytest.mark.parametrize("q", ["-3", "2.5", "1e3", ""])
def test_prompt_count_must_be_whole(q):
    with pytest.raises(IngestError):
        parse_prompt_tallies(PROMPTS + f"gem-s,dc-a,2025-05-01,{q}\n")


def test_duplicate_tally():
    with pytest.raises(IngestError, match="duplicate"):
        parse_prompt_tallies(PROMPTS + "g,dc,2025-05-01,1\ng,dc,2025-05-01,2\n")


def test_collect_mode_reports_every_bad_line():
    text = POWER + "m1,dc,2025-05-01T00Z,-1,1\nm2,dc,2025-05-01T00Z,1,1\nm3,dc,2025-05-01T00Z,1\n"
    errors = []
    samples = parse_power_samples(text, errors)
    assert [s.machine_id for s in samples] == ["m2"]
    assert [e.line for e in errors] == [2, 4]


FACTORS = {
    "2024": {
        "pue_by_campus": {"dc-a": 1.08, "dc-b": 1.12},
        "wue_l_per_kwh": 1.15,
        "ef_mb_g_per_kwh": 94,
        "ef_lb_g_per_kwh": 345,
        "embodied_g_per_machine_hour": {"tpu": 10.0},
    },
    "2023": {
        "pue_by_campus": {"dc-a": 1.1},
        "wue_l_per_kwh": 1.15,
        "ef_mb_g_per_kwh": 135,
        "embodied_g_per_machine_hour": {"tpu": 10.0},
    },
}


def test_load_factors():
    table = load_factors(json.dumps(FACTORS))
    assert sorted(table) == [2023, 2024]
    assert table[2024].ef_mb == 94 and table[2024].wue == 1.15
    assert table[2023].ef_mb == 135 and table[2023].ef_lb is None
    assert table[2024].pue("dc-b") == 1.12


def test_pue_below_one_rejected():
    doc = json.loads(json.dumps(FACTORS))
    doc["2024"]["pue_by_campus"]["dc-a"] = 0.9
    with pytest.raises(IngestError, match="PUE below 1.0"):
        load_factors(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["2024"].pop("wue_l_per_kwh"), "missing required"),
        (lambda d: d.update({"24": d.pop("2024")}), "bad year"),
        (lambda d: d["2024"].update(ef_mb=94), "unknown field"),
        (lambda d: d["2024"].update(ef_mb_g_per_kwh=-1), "non-negative"),
        (lambda d: d["2024"].update(wue_l_per_kwh="1.15"), "must be a number"),
    ],
)
def test_factor_document_errors(mutate, message):
    doc = json.loads(json.dumps(FACTORS))
    mutate(doc)
    with pytest.raises(IngestError, match=message):
        load_factors(doc)


def test_load_bundle_collects_per_file(tmp_path, table1_dir):
    for name in ("power.csv", "prompts.csv", "machines.csv", "factors.json"):
        (tmp_path / name).write_bytes((table1_dir / name).read_bytes())
    (tmp_path / "alloc.csv").write_text(ALLOC + "m1,g,j,2025-05-01T00Z,0.5,0.6,1\n")
    errors = {}
    load_bundle(tmp_path, errors)
    assert [e.line for e in errors["alloc.csv"]] == [2]
    assert errors["power.csv"] == []


# --- properties -------------------------------------------------------------------

ident = st.text("abcdefghijklmnopqrstuvwxyz0123456789-_.", min_size=1, max_size=8)
hours = st.datetimes(min_value=dt.datetime(2000, 1, 1), max_value=dt.datetime(2099, 12, 31)).map(
    lambda d: hour(d.strftime("%Y-%m-%dT%HZ"))
)
watts = st.floats(min_value=0, max_value=1e6, allow_nan=False)


@st.composite
def allocation(draw):
    t_total = draw(st.floats(min_value=1e-6, max_value=1.0))
    t_idle = draw(st.floats(min_value=0, max_value=t_total))
    return AllocationRecord(draw(ident), draw(ident), draw(ident), draw(hours), t_total, t_idle, draw(watts))


@given(st.lists(st.builds(PowerSample, ident, ident, hours, watts, watts), max_size=20,
                unique_by=lambda s: (s.machine_id, s.hour)))
def test_power_round_trip(samples):
    assert parse_power_samples(format_power_samples(samples)) == samples


@given(st.lists(allocation(), max_size=20, unique_by=lambda a: (a.machine_id, a.hour)))
def test_allocation_round_trip(allocs):
    assert parse_allocations(format_allocations(allocs)) == allocs


@given(st.lists(st.builds(PromptTally, ident, ident, st.dates(), st.integers(0, 10**12)), max_size=20,
                unique_by=lambda t: (t.model_id, t.datacenter_id, t.day)))
def test_tally_round_trip(tallies):
    assert parse_prompt_tallies(format_prompt_tallies(tallies)) == tallies


@given(st.lists(st.builds(MachineSpec, ident, ident, ident), max_size=10, unique_by=lambda m: m.machine_id))
def test_machine_round_trip(machines):
    assert parse_machines(format_machines(machines)) == machines


@settings(max_examples=300)
@given(
    t_total=st.floats(-0.5, 1.5, allow_nan=False),
    t_idle=st.floats(-0.5, 1.5, allow_nan=False),
    p_idle=st.floats(-100, 100, allow_nan=False),
)
def test_allocation_acceptance_matches_validity(t_total, t_idle, p_idle):
    line = f"m,g,j,2025-05-01T00Z,{t_total!r},{t_idle!r},{p_idle!r}\n"
    valid = 0 < t_total <= 1.0 and 0 <= t_idle <= t_total and p_idle >= 0
    try:
        parse_allocations(ALLOC + line)
        accepted = True
    except IngestError:
        accepted = False
    assert accepted == valid


@settings(max_examples=200)
@given(p_host=st.floats(-1e4, 1e4, allow_nan=False), p_accel=st.floats(-1e4, 1e4, allow_nan=False))
def test_power_acceptance_matches_validity(p_host, p_accel):
    line = f"m,dc,2025-05-01T00Z,{p_host!r},{p_accel!r}\n"
    try:
        parse_power_samples(POWER + line)
        accepted = True
    except IngestError:
        accepted = False
    assert accepted == (p_host >= 0 and p_accel >= 0)


def test_order_is_file_order():
    text = POWER + "".join(f"m{i},dc,2025-05-01T00Z,{i},1\n" for i in (3, 1, 2))
    assert [s.machine_id for s in parse_power_samples(text)] == ["m3", "m1", "m2"]
