import datetime as dt
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import hour
from fleetmeter.energy import (
    EXISTING,
    EnergyComponents,
    Fleet,
    aggregate_components,
    cross_check,
    machine_hour_components,
    per_prompt_energy,
)
from fleetmeter.errors import FleetmeterError, JoinError, TelemetryError
from fleetmeter.records import AllocationRecord, FactorSet, MachineSpec, PowerSample, Window

H0 = hour("2025-05-01T00Z")


def factors(pue_by_campus, year=2024):
    return {year: FactorSet(year, pue_by_campus, 1.15, 94.0, {"tpu": 10.0})}


def test_single_machine_hour():
    # 400 + 1600 W for a full hour at PUE 1.09, idle 300 W for 0.25 h
    s = PowerSample("m1", "dc-a", H0, 400.0, 1600.0)
    a = AllocationRecord("m1", "g", "j", H0, 1.0, 0.25, 300.0)
    e = machine_hour_components(s, a, 1.09)
    assert e.e_total == pytest.approx(2180.0, rel=1e-12)
    assert e.e_overhead == pytest.approx(180.0, rel=1e-12)
    assert e.e_idle == 75.0
    assert e.e_active_host == pytest.approx(385.0, rel=1e-12)
    assert e.e_active_accel == pytest.approx(1540.0, rel=1e-12)


def test_unit_pue_and_no_idle():
    s = PowerSample("m1", "dc-a", H0, 0.0, 1000.0)
    e = machine_hour_components(s, AllocationRecord("m1", "g", "j", H0, 0.5, 0.0, 999.0), 1.0)
    assert e.values() == (500.0, 0.0, 0.0, 0.0, 500.0)


def test_zero_power_splits_nothing():
    s = PowerSample("m1", "dc-a", H0, 0.0, 0.0)
    e = machine_hour_components(s, AllocationRecord("m1", "g", "j", H0, 1.0, 0.0, 0.0), 1.2)
    assert e.values() == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_idle_over_measured_is_telemetry_error():
    s = PowerSample("m1", "dc-a", H0, 100.0, 100.0)
    with pytest.raises(TelemetryError):
        machine_hour_components(s, AllocationRecord("m1", "g", "j", H0, 1.0, 1.0, 500.0), 1.1)


def test_join_reports_every_missing_sample():
    allocs = [AllocationRecord("m1", "g", "j", H0 + dt.timedelta(hours=k), 1.0, 0.0, 0.0) for k in range(3)]
    samples = [PowerSample("m1", "dc-a", H0, 1.0, 1.0)]
    with pytest.raises(JoinError) as info:
        aggregate_components(samples, allocs, [MachineSpec("m1", "tpu", "dc-a")], factors({"dc-a": 1.1}))
    assert info.value.missing == [("m1", "2025-05-01T01Z"), ("m1", "2025-05-01T02Z")]


def test_unknown_machine_is_join_error():
    s = [PowerSample("m9", "dc-a", H0, 1.0, 1.0)]
    a = [AllocationRecord("m9", "g", "j", H0, 1.0, 0.0, 0.0)]
    with pytest.raises(JoinError, match="m9"):
        aggregate_components(s, a, [], factors({"dc-a": 1.1}))


def test_campus_mismatch():
    s = [PowerSample("m1", "dc-b", H0, 1.0, 1.0)]
    a = [AllocationRecord("m1", "g", "j", H0, 1.0, 0.0, 0.0)]
    with pytest.raises(TelemetryError, match="campus"):
        aggregate_components(s, a, [MachineSpec("m1", "tpu", "dc-a")], factors({"dc-a": 1.1}))


def test_empty_window_sums_to_zero():
    e = aggregate_components([], [], [], {})
    assert e.values() == (0.0,) * 5 and e.machine_hours == 0.0


def test_zero_prompts_rejected():
    with pytest.raises(FleetmeterError, match="zero prompt count"):
        per_prompt_energy(EnergyComponents(1.0), 0)


def test_existing_headline_is_accelerator_only():
    e = per_prompt_energy(EnergyComponents(24, 2, 2, 6, 14), 100, EXISTING)
    assert e.headline == 0.14


def test_cross_check_clean_on_generated_bundle(table1_bundle):
    assert cross_check(table1_bundle) == []


def test_fleet_components_match_per_model(table1_bundle):
    fleet = Fleet(table1_bundle)
    (model,) = fleet.models()
    assert fleet.components(model_id=model).values() == fleet.components().values()


# --- properties -------------------------------------------------------------------

power = st.floats(0, 5000, allow_nan=False)
fraction = st.floats(1e-3, 1.0)
pues = st.floats(1.0, 2.0)


@st.composite
def machine_hours(draw, n_max=30, pue=None):
    n = draw(st.integers(0, n_max))
    campuses = ["dc-a", "dc-b"]
    samples, allocs, machines = [], [], []
    for k in range(n):
        p_host, p_accel = draw(power), draw(power)
        t_total = draw(fraction)
        t_idle = draw(st.one_of(st.just(0.0), st.floats(1e-3, t_total)))
        max_idle = (p_host + p_accel) * t_total / t_idle if t_idle else 0.0
        p_idle = draw(st.floats(0, min(max_idle * 0.999, 1e5))) if t_idle else draw(power)
        campus = campuses[k % 2]
        samples.append(PowerSample(f"m{k}", campus, H0, p_host, p_accel))
        allocs.append(AllocationRecord(f"m{k}", f"g{k % 3}", "j", H0, t_total, t_idle, p_idle))
        machines.append(MachineSpec(f"m{k}", f"hw{k % 2}", campus))
    p = pue if pue is not None else {c: draw(pues) for c in campuses}
    return samples, allocs, machines, factors(p)


def close(a, b, rel=1e-9):
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-9 * max(1.0, abs(a), abs(b)) * rel)


@given(machine_hours())
def test_decomposition_identity(data):
    e = aggregate_components(*data)
    parts = e.e_overhead + e.e_idle + e.e_active_host + e.e_active_accel
    assert math.isclose(e.e_total, parts, rel_tol=1e-9, abs_tol=1e-9)


@given(st.data(), pues)
def test_overhead_ratio_under_uniform_pue(data, pue):
    e = aggregate_components(*data.draw(machine_hours(pue={"dc-a": pue, "dc-b": pue})))
    if e.e_total > 0:
        assert math.isclose(e.e_overhead / e.e_total, (pue - 1) / pue, rel_tol=1e-9, abs_tol=1e-12)


@given(machine_hours(), st.randoms(use_true_random=False))
def test_permutation_invariance(data, rnd):
    samples, allocs, machines, f = data
    base = aggregate_components(samples, allocs, machines, f)
    shuffled = [list(x) for x in (samples, allocs, machines)]
    for x in shuffled:
        rnd.shuffle(x)
    assert aggregate_components(*shuffled, f).values() == base.values()


@given(machine_hours(), machine_hours())
def test_additivity_over_disjoint_sets(a, b):
    # rename the second set so the machines are disjoint
    sb, ab, mb, _ = b
    sb = [PowerSample("x" + s.machine_id, s.campus_id, s.hour, s.p_host, s.p_accel) for s in sb]
    ab = [AllocationRecord("x" + r.machine_id, r.model_id, r.job_id, r.hour, r.t_total, r.t_idle, r.p_idle) for r in ab]
    mb = [MachineSpec("x" + m.machine_id, m.hardware_class, m.campus_id) for m in mb]
    sa, aa, ma, f = a
    ea = aggregate_components(sa, aa, ma, f)
    eb = aggregate_components(sb, ab, mb, f)
    both = aggregate_components(sa + sb, aa + ab, ma + mb, f)
    for x, y, z in zip(ea.values(), eb.values(), both.values()):
        assert math.isclose(x + y, z, rel_tol=1e-12, abs_tol=1e-9)


@given(machine_hours(), st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_linearity_in_power(data, k):
    samples, allocs, machines, f = data
    scaled_s = [PowerSample(s.machine_id, s.campus_id, s.hour, s.p_host * k, s.p_accel * k) for s in samples]
    scaled_a = [AllocationRecord(a.machine_id, a.model_id, a.job_id, a.hour, a.t_total, a.t_idle, a.p_idle * k) for a in allocs]
    base = aggregate_components(samples, allocs, machines, f)
    scaled = aggregate_components(scaled_s, scaled_a, machines, f)
    for x, y in zip(base.values(), scaled.values()):
        assert math.isclose(x * k, y, rel_tol=1e-12, abs_tol=1e-9)


@given(machine_hours(n_max=10), st.floats(0, 1000))
def test_total_monotone_in_power(data, extra):
    samples, allocs, machines, f = data
    if not samples:
        return
    bumped = [PowerSample(samples[0].machine_id, samples[0].campus_id, H0, samples[0].p_host, samples[0].p_accel + extra)]
    bumped += samples[1:]
    assert aggregate_components(bumped, allocs, machines, f).e_total >= aggregate_components(samples, allocs, machines, f).e_total


@given(st.floats(1e-3, 1e6), st.integers(1, 10**9))
def test_per_prompt_round_trip(total, q):
    e = EnergyComponents(total, total / 10, total / 10, total / 5, total * 0.6)
    pp = per_prompt_energy(e, q)
    assert math.isclose(pp.e_total * q, total, rel_tol=1e-12)


def test_window_selection(table1_bundle):
    fleet = Fleet(table1_bundle)
    days = fleet.days()
    one = fleet.components(Window.day(days[0]))
    rest = fleet.components(Window(days[1], days[-1]))
    assert math.isclose(one.e_total + rest.e_total, fleet.components().e_total, rel_tol=1e-12)
