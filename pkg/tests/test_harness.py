import csv
import dataclasses
import json

import numpy as np
import pytest
import yaml

from aggdefense import RunConfig, preset, run
from aggdefense.cli import main
from aggdefense.harness import OUT_ENV, TRACE_FIELDS, default_out_dir, read_metrics, replay_oracle, write_report

T = 60


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run(RunConfig(preset("basketball_demo"), out_dir=out, horizon=T, seed=3)), out


def test_output_files(short_run):
    res, out = short_run
    for name in ("config.yaml", "trace.csv", "graph.csv", "world.csv", "metrics.csv", "summary.json"):
        assert (out / name).exists()
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == TRACE_FIELDS
    assert len(rows) == 1 + (T + 1) * 3
    metrics = read_metrics(out / "metrics.csv")
    assert [int(r["t"]) for r in metrics] == list(range(T + 1))
    assert metrics[0]["gap"] == ""
    summary = json.loads((out / "summary.json").read_text())
    assert summary["horizon"] == T and summary["seed"] == 3
    cfg = yaml.safe_load((out / "config.yaml").read_text())
    assert cfg["run"]["horizon"] == T


def test_run_invariants(short_run):
    res, _ = short_run
    assert res.feasibility_violations == 0
    assert np.nanmax(res.s_conservation) <= 1e-10
    assert np.nanmax(res.y_conservation) <= 1e-9
    assert res.X.shape == (T + 1, 3, 3)
    assert np.all(np.isfinite(res.X))
    for t in range(T):
        for i in range(3):
            lo, hi = res.box_lo[t + 1, i], res.box_hi[t + 1, i]
            assert np.all(res.X_tilde[t, i] >= lo) and np.all(res.X_tilde[t, i] <= hi)
    assert res.regret == pytest.approx(res.summary["regret"])


def test_replayed_regret_matches(short_run):
    res, out = short_run
    gaps, cum, total = replay_oracle(out)
    assert len(gaps) == T
    assert abs(total - res.regret) <= 1e-9


def test_report(short_run, tmp_path):
    _, out = short_run
    paths = write_report(out, tmp_path / "rep")
    with open(paths["regret"]) as fh:
        assert len(list(csv.reader(fh))) == T + 1
    with open(paths["positions"]) as fh:
        assert len(list(csv.reader(fh))) == 1 + (T + 1) * 3


def test_seed_changes_noise_but_not_shape():
    a = run(RunConfig(preset("fig3_left"), horizon=20, seed=1, oracle=False))
    b = run(RunConfig(preset("fig3_left"), horizon=20, seed=2, oracle=False))
    assert not np.array_equal(a.P_hat, b.P_hat)
    quiet = run(RunConfig(preset("fig3_left"), horizon=20, seed=1, oracle=False, measurement_noise=False))
    assert quiet.config.flags()["measurement_noise"] is False


@pytest.mark.parametrize("flags", [{"prediction": False}, {"box_timing": "strict"}, {"strict_kalman_init": True},
                                   {"barrier": False}])
def test_run_variants(flags):
    res = run(RunConfig(preset("surveillance_dynamic"), horizon=30, **flags))
    assert res.feasibility_violations == 0
    assert np.nanmax(res.s_conservation) <= 1e-10


def test_dropout_keeps_running():
    spec = preset("surveillance_dynamic")
    spec = dataclasses.replace(spec, noise=dataclasses.replace(spec.noise, dropout=0.5))
    res = run(RunConfig(spec, horizon=40, oracle=False))
    assert np.all(np.isfinite(res.P_hat))


def test_bad_run_config():
    with pytest.raises(ValueError):
        RunConfig(preset("fig3_left"), box_timing="late")


def test_default_out_dir(monkeypatch, tmp_path):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    assert default_out_dir("x") == tmp_path / "x"


def test_cli_run_oracle_report(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["run", "--preset", "fig4_left", "--horizon", "25", "--out", str(out), "--seed", "4", "--no-barrier"]) == 0
    cfg = yaml.safe_load((out / "config.yaml").read_text())
    assert cfg["run"]["barrier"] is False and cfg["run"]["seed"] == 4
    assert main(["oracle", "--trace", str(out)]) == 0
    assert "replayed R_T" in capsys.readouterr().out
    assert main(["report", "--trace", str(out)]) == 0
    assert (out / "report" / "regret.csv").exists()


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"scenario": "fig3_right", "run": {"horizon": 10, "oracle": False}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    spec_file = tmp_path / "s.yaml"
    spec_file.write_text(preset("fig3_left").dumps())
    assert main(["run", "--config", str(spec_file), "--horizon", "5", "--out", str(tmp_path / "o2")]) == 0


def test_cli_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("mode: hockey\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["oracle", "--trace", str(tmp_path)]) == 1
    assert main(["report", "--trace", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "nope"])
    assert exc.value.code == 2


def test_cli_oracle_detects_tampering(tmp_path):
    out = tmp_path / "t"
    assert main(["run", "--preset", "fig3_left", "--horizon", "10", "--out", str(out)]) == 0
    path = out / "metrics.csv"
    rows = read_metrics(path)
    rows[-1]["cumulative_regret"] = str(float(rows[-1]["cumulative_regret"]) + 1.0)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    assert main(["oracle", "--trace", str(out)]) == 1
