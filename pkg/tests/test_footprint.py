import datetime as dt
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetmeter.energy import EXISTING, EnergyComponents, per_prompt_energy
from fleetmeter.errors import FactorLookupError, FleetmeterError
from fleetmeter.footprint import (
    emissions_per_prompt,
    factors_for_date,
    fleet_weighted_factor,
    round_display,
    water_per_prompt,
)
from fleetmeter.records import FactorSet

F2024 = FactorSet(2024, {"dc-a": 1.09}, 1.15, 94.0, {"tpu": 10.0})
TABLE = {y: FactorSet(y, {}, 1.0, float(y), {}) for y in range(2015, 2030)}


def energy(total=0.24, overhead=0.02, idle=0.02, host=0.06, accel=0.14, q=1, boundary="comprehensive"):
    return per_prompt_energy(EnergyComponents(total * q, overhead * q, idle * q, host * q, accel * q), q, boundary)


def test_scope2():
    e = emissions_per_prompt(energy(), F2024, {}, 1)
    assert e.scope2_mb == pytest.approx(0.02256, rel=1e-12)
    assert e.scope1_3 == 0.0


def test_scope1_3_amortized_over_prompts():
    e = emissions_per_prompt(energy(q=1000), F2024, {"tpu": 1.0}, 1000)
    assert e.scope1_3 == pytest.approx(0.01)
    assert e.total == pytest.approx(0.03256)


def test_unknown_hardware_class():
    with pytest.raises(FactorLookupError):
        emissions_per_prompt(energy(), F2024, {"gpu": 1.0}, 1)


def test_unit_sanity():
    # 1 kWh at 1000 g/kWh is 1000 g
    f = FactorSet(2024, {}, 0.0, 1000.0, {})
    assert emissions_per_prompt(energy(1000.0, 0, 0, 0, 1000.0), f, {}, 1).scope2_mb == 1000.0


def test_water_excludes_overhead():
    assert water_per_prompt(energy(), F2024).consumption_ml == pytest.approx(0.253)


def test_existing_water_uses_headline():
    e = energy(boundary=EXISTING)
    assert water_per_prompt(e, F2024).consumption_ml == pytest.approx(0.14 * 1.15)


def test_factors_come_from_previous_year():
    assert factors_for_date(dt.date(2025, 5, 1), TABLE).year == 2024
    assert factors_for_date(dt.date(2025, 1, 1), TABLE).year == 2024
    assert factors_for_date(dt.date(2024, 12, 31), TABLE).year == 2023


def test_missing_factor_year():
    with pytest.raises(FactorLookupError, match="2030"):
        factors_for_date(dt.date(2031, 1, 1), TABLE)


@settings(max_examples=200)
@given(st.dates(dt.date(2016, 1, 1), dt.date(2030, 12, 31)))
def test_factor_year_lookup(date):
    assert factors_for_date(date, TABLE).year == date.year - 1
    assert factors_for_date(date, TABLE).ef_mb == date.year - 1


def test_fleet_weighted_pue():
    assert fleet_weighted_factor({"a": 1.08, "b": 1.12}, {"a": 3, "b": 1}) == pytest.approx(1.09)


def test_weighted_factor_errors():
    with pytest.raises(FleetmeterError):
        fleet_weighted_factor({"a": 1.1}, {"a": 0})
    with pytest.raises(FleetmeterError):
        fleet_weighted_factor({"a": 1.1}, {})


@given(st.floats(0, 10), st.floats(0.5, 4))
def test_emissions_linear_in_energy(e, k):
    a = emissions_per_prompt(energy(e, 0, 0, 0, e), F2024, {}, 1).scope2_mb
    b = emissions_per_prompt(energy(e * k, 0, 0, 0, e * k), F2024, {}, 1).scope2_mb
    assert math.isclose(a * k, b, rel_tol=1e-12, abs_tol=1e-15)


@pytest.mark.parametrize("x, s", [(0.125, "0.12"), (0.135, "0.14"), (0.2529, "0.25"), (0.005, "0.00"), (2.675, "2.68"), (1.0, "1.00")])
def test_round_display(x, s):
    assert round_display(x) == s
