import json
from dataclasses import replace

import numpy as np
import pytest

from gponqkd.document import DocumentError, Toggles
from gponqkd.pipeline import LinkModel
from gponqkd.simrun import RNG_NAME, Scenario, TimeSeries, run_scenario, sweep, sweep_table

from conftest import chain_doc


@pytest.fixture(scope="module")
def toy():
    return chain_doc(20.0)


def test_block_count_and_times(toy):
    ts, s = run_scenario(Scenario(toy, (), duration_s=600.0, block_s=60.0, seed=1))
    assert len(ts) == s.n_blocks == 10
    assert np.allclose(np.diff(ts.t_s), 60.0)
    assert ts.t_s[0] == 0.0


def test_single_block_when_duration_equals_block(toy):
    ts, _ = run_scenario(Scenario(toy, (), duration_s=5.0, block_s=5.0, seed=1))
    assert len(ts) == 1


def test_same_seed_same_series(toy):
    s = Scenario(toy, (), duration_s=3600.0, block_s=1.0, seed=42)
    a, sa = run_scenario(s)
    b, sb = run_scenario(s)
    assert a.to_csv() == b.to_csv()
    assert sa.to_json() == sb.to_json()
    c, _ = run_scenario(replace(s, seed=43))
    assert not np.array_equal(a.sifted, c.sifted)


def test_block_statistics_match_analytic_means(toy):
    s = Scenario(toy, (), duration_s=20.0, block_s=1e-3, seed=7)
    assert s.n_blocks >= 10_000
    ev = LinkModel(toy).evaluate(())
    ts, summary = run_scenario(s)
    d = toy.effective_qkd()
    mean_sifted = ev.report.Q_mu * d.sifted_rate_hz * s.block_s
    se = np.sqrt(mean_sifted / len(ts))
    assert abs(ts.sifted.mean() - mean_sifted) < 5 * se
    assert ts.errors.sum() / ts.sifted.sum() == pytest.approx(ev.report.E_mu, rel=0.02)
    assert summary.mean_skr_bps == pytest.approx(ev.skr_bps, rel=0.05)


def test_empty_blocks_carry_no_key(toy):
    doc = toy.with_physics(replace(toy.physics, rate_scale=1e-9))
    ts, _ = run_scenario(Scenario(doc, (), duration_s=10.0, block_s=1.0, seed=3))
    empty = ts.sifted == 0
    assert empty.any()
    assert np.all(ts.skr_bps[empty] == 0.0)
    assert np.all(ts.qber_percent[empty] == 50.0)


def test_csv_layout(toy):
    ts, _ = run_scenario(Scenario(toy, (), duration_s=3.0, block_s=1.0, seed=1))
    lines = ts.to_csv().splitlines()
    assert lines[0] == TimeSeries.HEADER
    assert len(lines) == 4
    assert lines[1].startswith("0.000,")


def test_summary_metadata(toy):
    _, s = run_scenario(Scenario(toy, (), duration_s=120.0, block_s=60.0, seed=9))
    d = json.loads(s.to_json())
    assert d["rng"] == RNG_NAME
    assert d["seed"] == 9
    assert d["back_reflection_dbm"] is None
    assert sum(d["skr_histogram"]["counts"]) == 2
    assert d["toggles"] == {"plsu": True, "raman": True, "reflections": True}


@pytest.mark.parametrize(
    "kw",
    [dict(duration_s=0.0), dict(block_s=-1.0), dict(duration_s=1.0, block_s=2.0), dict(seed=-1), dict(seed=2**64)],
)
def test_scenario_validation(toy, kw):
    with pytest.raises(DocumentError):
        Scenario(toy, (), **kw)


def test_unknown_ont_rejected(fig1):
    with pytest.raises(DocumentError):
        Scenario(fig1, ("nobody",))


def test_sweep_first_row_equals_single_run(fig1):
    base = Scenario.from_document(fig1, duration_s=3600.0)
    rows = sweep(base, [9, 1])
    _, single = run_scenario(replace(base, active_onts=fig1.active(9)))
    assert rows[0].to_json() == single.to_json()
    assert rows[1].seed == base.seed ^ 1


def test_sweep_rejects_impossible_count(fig1):
    with pytest.raises(ValueError):
        sweep(Scenario.from_document(fig1), [10])


def test_sweep_table_layout(fig1):
    rows = sweep(Scenario.from_document(fig1, duration_s=600.0), [0, 1])
    lines = sweep_table(rows).splitlines()
    assert lines[0] == "n_onts,qber,skr_bps,back_refl_dbm"
    assert lines[1].endswith(",")
    assert len(lines[2].split(",")) == 4


def test_calibrated_dip_and_recovery(calibrated):
    base = Scenario.from_document(calibrated, duration_s=3600.0)
    skr = {r.n_onts: r.analytic_skr_bps for r in sweep(base, [0, 1, 5, 9])}
    assert skr[1] <= 0.5 * skr[0]
    assert skr[5] < skr[1]
    assert skr[9] > skr[5]
    off = replace(base, toggles=Toggles(plsu=False))
    skr_off = {r.n_onts: r.analytic_skr_bps for r in sweep(off, [5, 9])}
    assert skr_off[9] <= skr_off[5]


def test_toggles_only_touch_their_mechanism(fig1):
    model = LinkModel(fig1)
    on = model.evaluate(fig1.active(5))
    off = model.evaluate(fig1.active(5), toggles=Toggles(plsu=False))
    assert off.noise.raman_forward == on.noise.raman_forward  # downstream Raman ignores ONT levels
    assert off.noise.dark == on.noise.dark
    assert off.noise.reflection_leakage > on.noise.reflection_leakage


def test_nine_ont_sixty_hours(calibrated):
    s = Scenario.from_document(calibrated, n_onts=9)
    assert s.n_blocks == 3600
    _, summary = run_scenario(s)
    assert summary.mean_skr_bps == pytest.approx(10070, rel=0.15)
    assert summary.mean_qber_percent == pytest.approx(5.11, abs=0.5)
