import json

import pytest

from gponqkd.document import DocumentError, document_to_dict, parse_document, parse_physics, physics_to_dict
from gponqkd.physics import Physics
from gponqkd.topology import ChannelDirection, Role


def fig1_dict(fig1):
    return document_to_dict(fig1)


def test_quantum_channel_defaults_to_1310(fig1):
    assert fig1.plan.quantum.wavelength_nm == 1310.0
    assert fig1.plan.quantum.launch_power_dbm is None


def test_unlisted_onts_get_upstream_channels(fig1):
    ups = [c for c in fig1.plan.channels if c.role is Role.UPSTREAM]
    assert [c.source for c in ups] == [f"ont{i}" for i in range(1, 10)]
    assert all(c.direction is ChannelDirection.UPSTREAM for c in ups)
    assert fig1.plan.upstream_of("ont1").wavelength_nm == 1316.0
    assert fig1.plan.upstream_of("ont1").launch_power_dbm == -3.0


def test_syntax_error_reports_line_and_column():
    with pytest.raises(DocumentError) as exc:
        parse_document('{\n  "nodes": {,\n}')
    assert exc.value.locus.startswith("line 2 column")


@pytest.mark.parametrize(
    "mutate, locus",
    [
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d["nodes"]["s1"].update(port=4), "nodes.s1.port"),
        (lambda d: d["physics"].update(splitter_excess=1), "physics.splitter_excess"),
        (lambda d: d["nodes"]["feeder"].update(length_km="3"), "nodes.feeder.length_km"),
        (lambda d: d["nodes"]["c1"].update(kind="tee"), "nodes.c1.kind"),
        (lambda d: d["scenario"].update(active_onts=12), "scenario.active_onts"),
        (lambda d: d["gpon"]["dba"].update(mode="greedy"), "gpon.dba"),
    ],
)
def test_schema_errors_name_the_field(fig1, mutate, locus):
    d = fig1_dict(fig1)
    mutate(d)
    with pytest.raises(DocumentError) as exc:
        parse_document(json.dumps(d))
    assert exc.value.locus == locus


def test_missing_section(fig1):
    d = fig1_dict(fig1)
    del d["channels"]
    with pytest.raises(DocumentError, match="channels"):
        parse_document(json.dumps(d))


def test_physics_overrides_apply():
    ph = parse_physics(
        {
            "splitter_excess_db": 0.7,
            "alpha_db_per_km": {"G652D": {"1310": 0.33, "1550": 0.19}},
            "bpf": {"floor_isolation_db": 40},
            "raman_rho": 3e-10,
            "detector": {"dark_count_prob_per_gate": 2e-6},
        }
    )
    assert ph.splitter_excess_db == 0.7
    assert ph.attenuation("G652D").db_per_km(1310) == 0.33
    assert ph.attenuation("G657A1").db_per_km(1310) == 0.35
    assert ph.bpf.floor_isolation_db == 40 and ph.bpf.edge_slope_db_per_nm == 15
    assert ph.raman.rho(180) == 3e-10
    assert ph.detector.dark_count_prob_per_gate == 2e-6


def test_physics_round_trip():
    ph = parse_physics({"raman_rho": [[-200, 1e-10], [0, 5e-10], [200, 2e-9]], "plsu_db_per_ont": 0.4})
    assert parse_physics(physics_to_dict(ph)) == ph
    assert parse_physics(physics_to_dict(Physics())) == Physics()


def test_bad_filter_rejected():
    with pytest.raises(DocumentError, match="floor_isolation_db"):
        parse_physics({"bpf": {"floor_isolation_db": 0.2}})


def test_rate_scale_is_not_a_qkd_key(fig1):
    d = fig1_dict(fig1)
    d["qkd"]["rate_scale"] = 2
    with pytest.raises(DocumentError, match="unknown key"):
        parse_document(json.dumps(d))


def test_active_onts_by_count_follow_terminal_order(fig1):
    d = fig1_dict(fig1)
    d["scenario"]["active_onts"] = 3
    doc = parse_document(json.dumps(d))
    assert doc.active() == ("ont1", "ont2", "ont3")
    assert fig1.active(5) == ("ont1", "ont2", "ont3", "ont4", "ont5")
    with pytest.raises(ValueError):
        fig1.active(10)
