import itertools
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gponqkd.document import document_to_dict, parse_document
from gponqkd.optics import (
    bpf_transmission_db,
    element_loss_db,
    hop_atoms,
    path_loss_db,
    received_power_dbm,
    reflection_paths,
)
from gponqkd.physics import BpfModel, Physics
from gponqkd.topology import Connector, Coupler, Direction, FiberSpan, Hop, Splitter, Topology, path_between

from conftest import chain_doc


def test_four_way_splitter_body():
    assert element_loss_db(Splitter(4), 1310) == pytest.approx(6.5206, abs=1e-4)
    assert element_loss_db(Splitter(4), 1550, Direction.UP) == element_loss_db(Splitter(4), 1310)


def test_zero_length_fiber():
    assert element_loss_db(FiberSpan(0.0), 1310) == 0.0


def test_balanced_coupler():
    assert element_loss_db(Coupler(), 1490) == pytest.approx(3.0103, abs=1e-4)


def test_unbalanced_coupler_branches():
    c = Coupler((0.9, 0.1))
    assert element_loss_db(c, 1310, branch=0) == pytest.approx(0.4576, abs=1e-4)
    assert element_loss_db(c, 1310, branch=1) == pytest.approx(10.0, abs=1e-9)


def test_wavelength_outside_range():
    with pytest.raises(ValueError):
        element_loss_db(FiberSpan(1.0), 1200)
    with pytest.raises(ValueError):
        element_loss_db(Splitter(2), 1650)


def test_fig1_budget_at_1310(fig1):
    loss = path_loss_db(fig1.topology, "olt", "bob", 1310)
    assert loss == pytest.approx(21.0, abs=1.0)
    # 1.05 + 6.52 + 0.35 + 6.52 + 0.014 + 3.01, 6 implicit + 6 explicit connectors
    assert loss == pytest.approx(1.05 + 0.35 + 0.014 + 2 * 6.5206 + 3.0103 + 12 * 0.3, abs=1e-3)


def test_same_node_budget_is_zero(fig1):
    assert path_loss_db(fig1.topology, "bob", "bob", 1310) == 0.0


def test_ten_km_span():
    assert path_loss_db(chain_doc(10.0).topology, "alice", "bob", 1310) == pytest.approx(3.5)


def test_attenuation_interpolates_and_clamps():
    a = Physics().attenuation("G652D")
    assert a.db_per_km(1400) == pytest.approx(0.35 + (0.24 - 0.35) * 90 / 180)
    assert a.db_per_km(1260) == 0.35
    assert a.db_per_km(1600) == 0.21


def test_bpf_shape():
    f = BpfModel(center_nm=1310, passband_halfwidth_nm=1, passband_loss_db=0.5, floor_isolation_db=60, edge_slope_db_per_nm=15)
    assert bpf_transmission_db(f, 1310) == 0.5
    assert bpf_transmission_db(f, 1311) == 0.5
    assert bpf_transmission_db(f, 1314) == pytest.approx(45.5)
    assert bpf_transmission_db(f, 1306) == pytest.approx(45.5)
    assert bpf_transmission_db(f, 1490) == 60


def test_bpf_is_continuous():
    f = BpfModel()
    for x in (1311.0, 1309.0, 1310 + 1 + (60 - 0.5) / 15):
        assert bpf_transmission_db(f, x - 1e-9) == pytest.approx(bpf_transmission_db(f, x + 1e-9), abs=1e-6)


def test_ont1_reflects_at_coupler_and_both_stages(fig1):
    points = {rp.reflection_point for rp in reflection_paths(fig1.topology, "ont1")}
    assert {"c1", "s2", "s1"} <= points
    # nearest reflections dominate
    paths = sorted(reflection_paths(fig1.topology, "ont1"), key=lambda rp: rp.total_loss_db)
    assert {paths[0].reflection_point, paths[1].reflection_point} <= {"c1", "outlet"}


def test_reflection_losses_at_ont_wavelength(fig1):
    for rp in reflection_paths(fig1.topology, "ont2"):
        assert rp.wavelength_nm == 1314.0
        assert rp.forward_loss_db >= 0 and rp.backward_loss_db >= 0 and rp.return_loss_db > 0


def test_reflections_never_beat_the_return_loss(fig1):
    t = fig1.topology.with_physics(
        Physics(connector_return_loss_db=60, splitter_return_loss_db=60, coupler_return_loss_db=60)
    )
    for ont in t.terminals.onts:
        for rp in reflection_paths(t, ont):
            assert rp.total_loss_db >= 60.0
            assert rp.total_loss_db >= rp.return_loss_db


def test_no_reflection_without_a_shared_branch_point():
    doc = chain_doc()
    d = document_to_dict(doc)
    d["nodes"]["ont"] = {"kind": "ont", "wavelength_nm": 1316}
    d["nodes"]["alice"] = {"kind": "olt"}
    d["nodes"]["span"] = {"kind": "fiber", "length_km": 1.0}
    d["nodes"]["split"] = {"kind": "splitter", "ports": 2}
    d["edges"] = [["alice", "split"], ["split", "span"], ["span", "bob"], ["split", "ont"]]
    d["terminals"]["onts"] = ["ont"]
    t = parse_document(json.dumps(d)).topology
    rps = reflection_paths(t, "ont")
    # only the root splitter body and its common port reflect toward Bob
    assert [(rp.reflection_point, rp.interface) for rp in rps] == [("split", "body"), ("split", "port")]


def test_received_power_examples(fig1):
    t, plan = fig1.topology, fig1.plan
    down = next(c for c in plan.classical if c.wavelength_nm == 1490)
    assert received_power_dbm(t, plan, down, "ont3") == pytest.approx(3.0 - path_loss_db(t, "olt", "ont3", 1490))
    up = plan.upstream_of("ont1")
    assert received_power_dbm(t, plan, up, "olt") == pytest.approx(-3.0 - path_loss_db(t, "ont1", "olt", 1316))


def test_received_power_over_a_21_db_path():
    doc = {
        "nodes": {
            "olt": {"kind": "olt"},
            "pad": {"kind": "connector", "insertion_loss_db": 21.0},
            "ont": {"kind": "ont", "wavelength_nm": 1316},
            "bob": {"kind": "qkd_rx"},
            "c": {"kind": "coupler"},
        },
        "edges": [["olt", "pad"], ["pad", "c"], ["c", "ont"], ["c", "bob"]],
        "terminals": {"alice": "olt", "bob": "bob", "onts": ["ont"]},
        "channels": [{"role": "quantum"}, {"role": "downstream", "wavelength_nm": 1490, "launch_power_dbm": 3}],
    }
    d = parse_document(json.dumps(doc))
    down = d.plan.classical[0]
    assert received_power_dbm(d.topology, d.plan, down, "c") == pytest.approx(-18.0)
    assert received_power_dbm(d.topology, d.plan, down, "pad") == pytest.approx(3.0)


def _pairs(t):
    return list(itertools.combinations(sorted(t.nodes), 2))


def test_symmetry_all_pairs(fig1):
    t = fig1.topology
    for a, b in _pairs(t):
        for lam in (1310, 1316, 1490):
            assert abs(path_loss_db(t, a, b, lam) - path_loss_db(t, b, a, lam)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_additivity_at_random_split_points(fig1, data):
    t = fig1.topology
    names = sorted(t.nodes)
    a = data.draw(st.sampled_from(names))
    b = data.draw(st.sampled_from(names))
    path = path_between(t, a, b)
    lam = data.draw(st.floats(1260, 1600))
    total = path_loss_db(t, a, b, lam)
    inner = [i for i, h in enumerate(path.hops) if not isinstance(t.nodes[h.node], (Splitter, Coupler))]
    if not inner:
        return
    k = data.draw(st.sampled_from(inner))
    mid = path.hops[k]
    parts = (
        path_loss_db(t, a, mid.node, lam)
        + sum(x.loss_db for x in hop_atoms(t, mid, lam))
        + path_loss_db(t, mid.node, b, lam)
    )
    assert parts == pytest.approx(total, abs=1e-9)


def test_inserting_an_element_never_lowers_loss(fig1):
    t = fig1.topology
    base = {(a, b): path_loss_db(t, a, b, 1310) for a, b in _pairs(t)}
    for i, (p, c) in enumerate(t.edges):
        for extra in (Connector(), FiberSpan(0.5)):
            edges = list(t.edges)
            edges[i : i + 1] = [(p, "extra"), ("extra", c)]
            t2 = Topology({**t.nodes, "extra": extra}, tuple(edges), t.terminals, t.physics)
            for (a, b), loss in base.items():
                assert path_loss_db(t2, a, b, 1310) >= loss - 1e-12


def test_splitters_are_passive(fig1):
    t = fig1.topology
    for node, e in t.nodes.items():
        if not isinstance(e, (Splitter, Coupler)):
            continue
        n_out = e.ports if isinstance(e, Splitter) else 2
        shares = 0.0
        for port in range(n_out):
            atoms = hop_atoms(t, Hop(node, Direction.DOWN, None, port), 1310)
            shares += 10 ** (-sum(a.loss_db for a in atoms) / 10)
        assert shares <= 1.0
        assert not math.isclose(shares, 1.0)
