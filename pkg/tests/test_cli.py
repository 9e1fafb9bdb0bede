import json

import pytest

from gponqkd.cli import OUT_ENV, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_builtin(capsys):
    code, out, _ = run(capsys, "validate", "builtin:fig1")
    assert code == 0
    assert "9 ONTs" in out


def test_validate_bad_document(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": {}, "edges": [], "terminals": {}}')
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 1
    assert err


def test_missing_file_is_io_error(capsys):
    assert run(capsys, "validate", "/nonexistent/plant.json")[0] == 2


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "budget")[0] == 2
    assert run(capsys, "budget", "builtin:fig1", "--set", "bogus=1")[0] == 2
    assert run(capsys, "budget", "builtin:fig1", "--set", "noequals")[0] == 2


def test_budget_total(capsys):
    code, out, _ = run(capsys, "budget", "builtin:fig1", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["total_db"] == pytest.approx(21.0, abs=1.0)
    assert d["total_db"] == pytest.approx(sum(e["loss_db"] for e in d["elements"]))


def test_budget_formats_agree(capsys):
    _, csv_out, _ = run(capsys, "budget", "builtin:fig1", "--format", "csv")
    _, table_out, _ = run(capsys, "budget", "builtin:fig1")
    total = float(csv_out.strip().splitlines()[-1].split(",")[-1])
    table_total = float(table_out.strip().splitlines()[-1].split()[1])
    assert table_total == pytest.approx(total, abs=1e-3)


def test_budget_same_node_is_zero(capsys):
    code, out, _ = run(capsys, "budget", "builtin:fig1", "--from", "ont3", "--to", "ont3", "--format", "json")
    assert code == 0
    assert json.loads(out)["total_db"] == 0.0


def test_budget_unknown_node(capsys):
    code, _, err = run(capsys, "budget", "builtin:fig1", "--from", "nowhere")
    assert code == 1
    assert "nowhere" in err


def test_simulate_single_block(tmp_path, capsys):
    code, out, _ = run(
        capsys, "simulate", "builtin:fig1", "--duration", "60", "--block", "60", "--out", str(tmp_path)
    )
    assert code == 0
    rows = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert len(rows) == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n_blocks"] == 1
    assert "mean SKR" in out


def test_simulate_is_byte_identical(tmp_path, capsys):
    args = ["simulate", "builtin:fig1", "--duration", "3600", "--seed", "17"]
    for d in ("a", "b"):
        assert run(capsys, *args, "--out", str(tmp_path / d))[0] == 0
    for name in ("timeseries.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_out_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert run(capsys, "simulate", "builtin:fig1", "--duration", "120")[0] == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_overrides_and_toggles(tmp_path, capsys):
    base = ["simulate", "builtin:fig1", "--duration", "120", "--onts", "9"]
    run(capsys, *base, "--out", str(tmp_path / "on"))
    run(capsys, *base, "--set", "plsu=off", "--set", "seed=5", "--out", str(tmp_path / "off"))
    on = json.loads((tmp_path / "on" / "summary.json").read_text())
    off = json.loads((tmp_path / "off" / "summary.json").read_text())
    assert off["toggles"]["plsu"] is False and off["seed"] == 5
    assert off["analytic_skr_bps"] < on["analytic_skr_bps"]


def test_bad_override_value_is_domain_error(capsys):
    assert run(capsys, "simulate", "builtin:fig1", "--set", "duration_s=-5")[0] == 1


def test_physics_fragment(tmp_path, capsys):
    frag = tmp_path / "ph.json"
    frag.write_text(json.dumps({"connector_return_loss_db": 35.0}))
    _, plain, _ = run(capsys, "report", "builtin:fig1", "--onts", "1")
    _, worse, _ = run(capsys, "report", "builtin:fig1", "--onts", "1", "--physics", str(frag))
    br = lambda text: float(text.splitlines()[1].split(",")[3])  # noqa: E731
    assert br(worse) > br(plain)


def test_sweep_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "builtin:fig1", "--onts", "0,9", "--set", "duration_s=600", "--out", str(tmp_path))
    assert code == 0
    assert out == (tmp_path / "sweep.csv").read_text()
    rows = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["n_onts"] for r in rows] == [0, 9]


def test_sweep_bad_counts(capsys):
    assert run(capsys, "sweep", "builtin:fig1", "--onts", "1,x")[0] == 2
    assert run(capsys, "sweep", "builtin:fig1", "--onts", "12")[0] == 1


def test_calibrate_rejects_empty_observations(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("n_onts,qber,skr_bps,back_refl_dbm\n")
    assert run(capsys, "calibrate", "builtin:fig1", "--observations", str(obs), "--out", str(tmp_path))[0] == 1


def test_calibrate_missing_observations(tmp_path, capsys):
    code = run(capsys, "calibrate", "builtin:fig1", "--observations", str(tmp_path / "none.csv"))[0]
    assert code == 2


def test_calibrate_writes_physics(tmp_path, capsys):
    code, out, _ = run(
        capsys, "calibrate", "builtin:fig1", "--observations", "builtin:table1.csv",
        "--budget", "300", "--restarts", "1", "--out", str(tmp_path),
    )
    assert code == 0
    assert out.startswith("objective")
    frag = json.loads((tmp_path / "physics.json").read_text())
    assert set(frag) >= {"raman_rho", "bpf", "rate_scale"}
    assert run(capsys, "report", "builtin:fig1", "--physics", str(tmp_path / "physics.json"))[0] == 0
