import json

import numpy as np
import pytest

from gflab import cli
from gflab import io as gio
from gflab.measures import GridSpec, on_grid


@pytest.fixture(autouse=True)
def _out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("GFL_OUT", str(tmp_path))
    monkeypatch.chdir(tmp_path)


def run(*argv):
    return cli.run(list(argv))


def test_aggregate_two_particles(tmp_path):
    code = run("aggregate", "--n", "2", "--init", "twopoint", "--e", "0", "--T", "2", "--dt", "1e-3",
               "--record-every", "100", "--out", "agg", "--validate")
    assert code == 0
    out = tmp_path / "agg"
    names = {p.name for p in out.iterdir()}
    assert {"trajectory.csv", "diagnostics.csv", "report.json", "metadata.json", "energy.png"} <= names
    rep = gio.read_json(out / "report.json")
    assert rep["status"] == "pass"
    tr = gio.read_table(out / "trajectory.csv")
    np.testing.assert_allclose(tr["v_1"], 1 / (1 + tr["t"]), rtol=1e-6)


def test_boltzmann_replicas(tmp_path):
    code = run("boltzmann", "--n", "100", "--T", "1", "--replicas", "3", "--out", "b", "--no-figures")
    assert code == 0
    out = tmp_path / "b"
    assert sorted(p.name for p in out.glob("replica_*")) == ["replica_000", "replica_001", "replica_002"]
    ens = gio.read_json(out / "ensemble.json")
    assert len(ens["energy_mean"]) == len(ens["t"])
    assert not list(out.glob("*.png"))


def test_config_errors_exit_2(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"e": 1.5}))
    assert run("aggregate", "--config", "c.json") == 2
    assert "invalid config key 'e'" in capsys.readouterr().err
    assert run("aggregate", "--e", "-1") == 2
    assert run("nonsense") == 2
    assert run("metric") == 2


def test_flags_override_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"n": 4, "e": 0.2, "T": 0.5, "dt": 0.1, "seed": 3, "init": "uniform"}))
    assert run("aggregate", "--config", "c.json", "--e", "0.7", "--seed", "5", "--out", "o", "--no-figures") == 0
    params = gio.read_json(tmp_path / "o" / "report.json")["parameters"]
    assert params["e"] == 0.7 and params["n"] == 4 and params["seed"] == 5


def _measures(tmp_path):
    g = GridSpec(-2, 2, 21)
    a = np.zeros(21)
    a[5] = a[15] = 0.5
    b = np.zeros(21)
    b[10] = 1.0
    c = np.zeros(21)
    c[11] = 1.0
    for name, w in (("a.json", a), ("b.csv", b), ("c.csv", c)):
        f = on_grid(w, g)
        gio.write_measure(tmp_path / name, f if name.endswith("json") else f.support())


def test_metric_outputs(tmp_path):
    _measures(tmp_path)
    code = run("metric", "--mu0", "a.json", "--mu1", "b.csv", "--grid=-2:2:21", "--K", "8", "--iters", "5",
               "--out", "m", "--validate")
    assert code == 0
    out = tmp_path / "m"
    rep = gio.read_json(out / "report.json")
    assert rep["metrics"]["upper_bound"] is True
    assert rep["metrics"]["action"] > 0
    fl = gio.read_fluxes(out / "fluxes.bin")
    assert fl.shape == (8, 21 * 20 // 2)
    path = gio.read_table(out / "path.csv")
    assert len(path["t"]) == 9


def test_metric_infeasible_exit_3(tmp_path, capsys):
    _measures(tmp_path)
    assert run("metric", "--mu0", "a.json", "--mu1", "c.csv", "--grid=-2:2:21", "--out", "m") == 3
    assert "centre of mass" in capsys.readouterr().err
    rep = gio.read_json(tmp_path / "m" / "report.json")
    assert rep["metrics"]["action"] == float("inf")
    assert '"infinite": "+inf"' in (tmp_path / "m" / "report.json").read_text()


def test_metric_off_grid_measure_exit_2(tmp_path):
    (tmp_path / "x.csv").write_text("position,weight\n0.05,1\n")
    _measures(tmp_path)
    assert run("metric", "--mu0", "x.csv", "--mu1", "b.csv", "--grid=-2:2:21") == 2


def test_failed_check_exit_4(tmp_path):
    # two particles: the fit window [T/10, T] is still pre-asymptotic at T = 10
    code = run("verify", "haff", "--n", "2", "--init", "twopoint", "--e", "0", "--T", "10", "--dt", "0.01",
               "--out", "h", "--no-figures")
    assert code == 4
    assert gio.read_json(tmp_path / "h" / "report.json")["status"] == "fail"


def test_haff_short_horizon_is_a_config_error():
    assert run("verify", "haff", "--n", "50", "--T", "1", "--dt", "0.1", "--out", "h") == 2


def test_verify_taylor_link(tmp_path):
    assert run("verify", "taylor_link", "--n", "200", "--out", "t") == 0
    assert (tmp_path / "t" / "residuals.png").exists()


def test_verify_rejects_bad_experiment_parameters(tmp_path):
    assert run("verify", "taylor_link", "--e-list", "0.9,0.95", "--out", "t") == 2
    assert run("compare", "--replicas", "3", "--out", "c") == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "gflab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "aggregate" in res.stdout
