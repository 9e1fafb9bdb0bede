from importlib import resources

import pytest

from gponqkd import calibrate as cal
from gponqkd.document import load_document, parse_document
from gponqkd.pipeline import LinkModel

SCENARIOS = resources.files("gponqkd.scenarios")


def scenario_path(name):
    return str(SCENARIOS.joinpath(name))


@pytest.fixture(scope="session")
def fig1():
    return load_document(scenario_path("fig1.json"))


@pytest.fixture(scope="session")
def bench():
    return load_document(scenario_path("bench.json"))


@pytest.fixture(scope="session")
def table1():
    return cal.read_observations_csv(scenario_path("table1.csv"))


@pytest.fixture(scope="session")
def calibration(fig1, table1):
    """Fit the measured table once per session; several modules test against it."""
    model = LinkModel(fig1)
    p0 = cal.CalibrationParams.from_physics(fig1.physics, fig1.plsu.db_per_added_ont)
    return cal.fit(p0, table1, model)


@pytest.fixture(scope="session")
def calibrated(fig1, calibration):
    return fig1.with_physics(calibration.params.apply(fig1.physics))


def chain_doc(length_km=10.0, **extra):
    """Alice -> one G652D span -> Bob."""
    import json

    doc = {
        "nodes": {
            "alice": {"kind": "qkd_tx"},
            "span": {"kind": "fiber", "length_km": length_km},
            "bob": {"kind": "qkd_rx"},
        },
        "edges": [["alice", "span"], ["span", "bob"]],
        "terminals": {"alice": "alice", "bob": "bob", "onts": []},
        "channels": [{"role": "quantum"}],
    }
    doc.update(extra)
    return parse_document(json.dumps(doc))
