import numpy as np
import pytest

from gflab import verification as vf
from gflab.aggregation import integrate, ParticleState
from gflab.config import ConfigError, SimConfig
from gflab.measures import empirical


def test_loglog_slope_recovers_power():
    t = np.linspace(1, 100, 50)
    assert vf.loglog_slope(t, 3 * t**-2.0) == pytest.approx(-2.0)


def test_de_giorgi_tolerance():
    assert vf.de_giorgi_tolerance(1e-3) == pytest.approx(1e-4)


def test_ensemble_summary_interval():
    E = np.array([[1.0, 0.5], [1.0, 0.7], [1.0, 0.6]])
    s = vf.ensemble_summary([0.0, 1.0], E)
    assert s["energy_mean"][1] == pytest.approx(0.6)
    half = 1.96 * 0.1 / np.sqrt(3)
    assert s["ci_high"][1] - s["energy_mean"][1] == pytest.approx(half)
    assert s["ci_low"][0] == s["ci_high"][0] == 1.0


def test_run_replicas_is_order_stable_across_threads():
    v0 = np.random.default_rng(0).normal(size=60)
    a = vf.run_replicas(v0, 0.5, 0.5, 0.05, seed=3, replicas=3, threads=1)
    b = vf.run_replicas(v0, 0.5, 0.5, 0.05, seed=3, replicas=3, threads=2)
    for (ta, va, _), (tb, vb, _) in zip(a, b):
        assert np.array_equal(ta, tb) and np.array_equal(va, vb)


def test_haff_two_particle_closed_form():
    cfg = SimConfig(n=2, init="twopoint", e=0.0, T=10.0, dt=1e-3, record_every=10)
    rep = vf.haff_experiment(cfg)
    assert rep.checks["closed_form"]["status"] == "pass"
    assert rep.metrics["closed_form_max_rel_error"] < 1e-6


def test_haff_elastic_skips_slope():
    rep = vf.haff_experiment(SimConfig(n=20, e=1.0, T=1.0, dt=0.1))
    assert rep.checks["haff_slope"]["status"] == "skipped"
    assert rep.checks["energy_constant"]["status"] == "pass"


def test_haff_boltzmann_mean_cooling():
    cfg = SimConfig(dynamics="boltzmann", n=400, e=0.5, T=100.0, dt=0.5, replicas=2, record_every=4)
    rep = vf.haff_experiment(cfg)
    assert rep.metrics["collisions"] > 0
    assert -2.4 < rep.metrics["haff_slope"] < -1.6


def test_de_giorgi_small():
    rep = vf.de_giorgi_experiment(SimConfig(n=20, e=0.5, T=1.0, dt=1e-2))
    assert rep.status == "pass", rep.checks
    assert rep.metrics["halving_ratio"] > 3


def test_taylor_exact_two_point():
    f = empirical([-1.0, 1.0])
    rep = vf.taylor_link_experiment(f)
    assert rep.checks["square_exact"]["status"] == "pass"
    np.testing.assert_allclose(rep.metrics["residual[v^2]"], (1 - np.array(vf.DEFAULT_TAYLOR_E)) ** 2 / 4 * 4, rtol=1e-10)
    assert rep.checks["slope[v^4]"]["status"] == "pass"


def test_taylor_rejects_few_points():
    with pytest.raises(vf.ExperimentError):
        vf.taylor_link_experiment(empirical([-1.0, 1.0]), [0.9, 0.95])


def test_compare_needs_replicas():
    with pytest.raises(ConfigError):
        vf.compare_experiment(SimConfig(dynamics="boltzmann", replicas=2))


def test_compare_small_reports_a_status():
    cfg = SimConfig(dynamics="boltzmann", n=200, T=2.0, dt=0.1, replicas=10, record_every=2)
    rep = vf.compare_experiment(cfg)
    assert rep.checks["monotone_decrease"]["status"] in ("pass", "inconclusive", "fail")
    assert rep.metrics["elastic_baseline"] == 0.0
    assert "no rate is asserted" in rep.metrics["scaling_exponent_note"]


def test_stability_two_particles():
    rep = vf.stability_experiment(SimConfig(n=2, init="twopoint", e=0.0, T=2.0, dt=1e-2, perturbations=4))
    assert rep.status == "pass", rep.checks
    d = rep.metrics["sup_d1"]
    assert np.all(np.diff(d) < 0)


def test_stability_rescales_energy_for_many_particles():
    rep = vf.stability_experiment(SimConfig(n=30, e=0.5, T=1.0, dt=1e-2, perturbations=3))
    assert rep.status == "pass", rep.checks


def test_aggregate_run_report_checks():
    cfg = SimConfig(n=30, e=0.5, T=1.0, dt=1e-2, record_every=5)
    traj = integrate(ParticleState(np.random.default_rng(0).normal(size=30)), 0.5, 1.0, 1e-2, record_every=5)
    rep = vf.aggregate_run_report(cfg, traj)
    assert rep.status == "pass", rep.checks
    assert {"centre_of_mass", "energy_monotone", "action_equals_dissipation", "energy_balance"} <= set(rep.checks)
