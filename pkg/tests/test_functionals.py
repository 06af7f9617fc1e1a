import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gflab import functionals as fn
from gflab.measures import dirac, empirical
from oracles import double_sum


@st.composite
def measures_(draw, max_atoms=12):
    k = draw(st.integers(1, max_atoms))
    pos = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=k, max_size=k, unique=True))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)))
    return empirical(pos, w / w.sum())


restitution = st.sampled_from([0.0, 0.25, 0.5, 0.9, 1.0])
half_pair = empirical([-1.0, 1.0])


def test_restitution_range():
    assert fn.check_restitution(1) == 1.0
    for bad in (-0.1, 1.01):
        with pytest.raises(ValueError):
            fn.check_restitution(bad)
    with pytest.raises(ValueError):
        fn.dissipation(half_pair, 2.0)


def test_kinetic_energy_examples():
    assert fn.kinetic_energy(dirac(0)) == 0
    assert fn.kinetic_energy(half_pair) == 0.5


def test_dissipation_examples():
    assert fn.dissipation(half_pair, 1.0) == 0
    assert fn.dissipation(half_pair, 0.0) == 1.0
    assert fn.dissipation(dirac(3.0), 0.0) == 0


def test_interaction_energy_is_a_third_of_dissipation():
    assert fn.interaction_energy(half_pair, 0.0) == pytest.approx(1 / 3)


@settings(max_examples=50, deadline=None)
@given(measures_(), restitution)
def test_pair_sums_match_loops(f, e):
    v, w = f.positions, f.weights
    D = double_sum(v, w, lambda a, b: (1 - e) / 4 * abs(a - b) ** 3)
    W = 0.5 * double_sum(v, w, lambda a, b: (1 - e) / 6 * abs(a - b) ** 3)
    assert fn.dissipation(f, e) == pytest.approx(D, rel=1e-12, abs=1e-14)
    assert fn.interaction_energy(f, e) == pytest.approx(W, rel=1e-12, abs=1e-14)


def test_sorted_cubic_sum_matches_direct():
    rng = np.random.default_rng(0)
    v = rng.normal(size=3000)
    w = rng.random(3000)
    w /= w.sum()
    r = np.abs(v[:, None] - v[None, :])
    direct = float(np.einsum("i,ij,j->", w, r**3, w))
    assert fn.pair_abs_cubic_sum(v, w) == pytest.approx(direct, rel=1e-10)


def test_action_of_gradient_flux_equals_dissipation():
    f = empirical([-1.0, 0.3, 2.0], [0.2, 0.5, 0.3])
    U = fn.gradient_flow_flux(f.positions)
    assert fn.action(f, U, 0.5) == pytest.approx(fn.dissipation(f, 0.5), rel=1e-14)
    assert fn.action(f, U, 1.0) == 0


@settings(max_examples=50, deadline=None)
@given(measures_(), restitution, st.integers(0, 2**31))
def test_action_matches_loop(f, e, seed):
    n = len(f)
    R = np.random.default_rng(seed).normal(size=(n, n))
    ref = double_sum(
        np.arange(n), f.weights, lambda i, j: R[int(i), int(j)] ** 2 * (1 - e) / 4 * abs(f.positions[int(i)] - f.positions[int(j)])
    )
    assert fn.action(f, R, e) == pytest.approx(ref, rel=1e-12, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(measures_(), restitution, st.integers(0, 2**31))
def test_antisymmetric_part_has_lower_action(f, e, seed):
    n = len(f)
    R = np.random.default_rng(seed).normal(size=(n, n))
    U = fn.antisymmetrize(f.positions, R)
    assert np.array_equal(U.matrix(), -U.matrix().T)
    assert fn.action(f, U, e) <= fn.action(f, R, e) * (1 + 1e-12) + 1e-15


def test_action_infinite_on_zero_mass_pair():
    f = empirical([0.0, 1.0, 2.0], [0.5, 0.0, 0.5])
    U = fn.PairFlux.from_matrix(f.positions, np.array([[0, 1.0, 0], [-1.0, 0, 0], [0, 0, 0]]))
    assert fn.action(f, U, 0.0) == math.inf
    assert fn.action(f, fn.PairFlux.zeros(f.positions), 0.0) == 0.0


def test_alpha_conventions():
    np.testing.assert_array_equal(fn.alpha([2.0, 0.0, 0.0], [2.0, 0.0, 1.0]), [2.0, 0.0, math.inf])


def test_action_of_measures_matches_density_form():
    f = empirical([-1.0, 0.5, 2.0], [0.3, 0.3, 0.4])
    U = fn.PairFlux.gradient(f.positions, [0.1, -0.4, 0.7]).matrix()
    mass = np.outer(f.weights, f.weights)
    assert fn.action_of_measures(f.positions, mass, U * mass, 0.2) == pytest.approx(fn.action(f, U, 0.2), rel=1e-13)


def test_pairflux_structure():
    s = np.array([0.0, 1.0, 3.0])
    U = fn.PairFlux.gradient(s, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(U.matrix(), [[0, -1, -1], [1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal((U + U * 2.0).upper, 3 * U.upper)
    np.testing.assert_array_equal((-U).upper, -U.upper)
    with pytest.raises(ValueError):
        fn.PairFlux.from_matrix(s, np.ones((3, 3)))
    with pytest.raises(ValueError):
        fn.PairFlux(s, np.zeros(2))
    with pytest.raises(ValueError):
        U + fn.PairFlux.zeros([0.0, 1.0, 2.0])


def test_trapezoid():
    t = np.linspace(0, 1, 11)
    assert fn.trapezoid(t, t) == pytest.approx(0.5)
    assert fn.trapezoid([1.0], [0.0]) == 0.0


class _Stub:
    def __init__(self, times, states):
        self.times = np.asarray(times)
        self.states = states
        self.fluxes = [fn.gradient_flow_flux(s.positions) for s in states]

    def measure(self, k):
        return self.states[k]


def test_de_giorgi_needs_fluxes_and_increasing_times():
    traj = _Stub([0.0, 1.0], [half_pair, half_pair])
    traj.fluxes = None
    with pytest.raises(ValueError):
        fn.de_giorgi(traj, 0.0)
    traj = _Stub([0.0, 0.0], [half_pair, half_pair])
    with pytest.raises(ValueError):
        fn.de_giorgi(traj, 0.0)


def test_de_giorgi_constant_curve():
    # frozen curve with a nonzero flux: G = int A = int D over [0, 1]
    traj = _Stub([0.0, 1.0], [half_pair, half_pair])
    assert fn.de_giorgi(traj, 0.0) == pytest.approx(1.0)


def test_flux_sequence_indexing():
    seq = fn.FluxSequence(3, lambda k: fn.PairFlux.zeros([0.0, float(k + 1)]))
    assert len(seq) == 3
    assert seq[-1].support[1] == 3.0
    assert len(seq[0:2]) == 2
    with pytest.raises(IndexError):
        seq[3]
