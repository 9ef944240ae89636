import datetime as dt

import pytest

from fleetmeter import synthfleet
from fleetmeter.ingest import load_bundle
from fleetmeter.records import UTC


def hour(text: str) -> dt.datetime:
    return dt.datetime.strptime(text, "%Y-%m-%dT%HZ").replace(tzinfo=UTC)


@pytest.fixture(scope="session")
def table1_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("table1")
    synthfleet.write_bundle(synthfleet.generate_scenario(synthfleet.calibrate_table1()), out)
    return out


@pytest.fixture(scope="session")
def table1_bundle(table1_dir):
    return load_bundle(table1_dir)


@pytest.fixture(scope="session")
def trend_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("trend")
    synthfleet.write_bundle(synthfleet.generate_scenario(synthfleet.trend_config()), out)
    return out
