"""Stochastic particle simulation of the homogeneous inelastic Boltzmann equation.

Hard-sphere kernel ``sigma(r) = r``.  An unordered pair ``{i, j}`` of the
``n`` particles collides at rate ``|v_i - v_j| / n``, which reproduces the
energy law ``dE/dt = -(1 - e^2)/8 sum_{i != j} |v_i - v_j|^3 w_i w_j``.
Candidates are drawn against the majorant ``Lambda = max v - min v``
(no-time-counter scheme).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import functionals as fn
from .aggregation import ParticleState, Trajectory, diagnostics_table
from .measures import DiscreteMeasure

#: Upper bound on candidates per particle in one (sub)step before the step is split.
MAX_CANDIDATES_PER_PARTICLE = 1.0


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function bundled with its derivative."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


CONSTANT = TestFunction("1", lambda v: np.ones_like(v), lambda v: np.zeros_like(v))
LINEAR = TestFunction("v", lambda v: v, lambda v: np.ones_like(v))
SQUARE = TestFunction("v^2", lambda v: v * v, lambda v: 2.0 * v)
QUARTIC = TestFunction("v^4", lambda v: v**4, lambda v: 4.0 * v**3)
SINE = TestFunction("sin v", np.sin, np.cos)

TEST_FUNCTIONS = {tf.name: tf for tf in (CONSTANT, LINEAR, SQUARE, QUARTIC, SINE)}


def collide(v: float, v_star: float, e: float) -> tuple[float, float]:
    """Post-collisional velocities ``T (v, v_*)``."""
    a = (1.0 - e) / 2.0
    b = (1.0 + e) / 2.0
    return a * v + b * v_star, b * v + a * v_star


def pair_energy_change(v: float, v_star: float, e: float) -> float:
    """Exact change of ``(v^2 + v_*^2) / 2`` in one collision."""
    return -(1.0 - e * e) / 4.0 * (v - v_star) ** 2


@dataclass
class CollisionLog:
    """Pre/post velocities of every accepted collision (optional, memory heavy)."""

    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.pre).reshape(-1, 2), np.array(self.post).reshape(-1, 2)


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """PCG64 stream for one replica, derived from ``(seed, replica)`` by SeedSequence hashing."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replica)])))


def _step(v: list, e: float, dt: float, rng: np.random.Generator, stats: dict, log: CollisionLog | None):
    """Advance ``v`` in place by ``dt``; returns False if the majorant was violated."""
    n = len(v)
    lam = max(v) - min(v)
    if lam <= 0.0:
        return True
    expected = (n - 1) * lam * dt / 2.0
    if expected > MAX_CANDIDATES_PER_PARTICLE * n:
        return None
    n_cand = int(expected)
    if rng.random() < expected - n_cand:
        n_cand += 1
    if n_cand == 0:
        return True
    ii = rng.integers(0, n, size=n_cand).tolist()
    jj = rng.integers(0, n - 1, size=n_cand).tolist()
    uu = (rng.random(n_cand) * lam).tolist()
    a = (1.0 - e) / 2.0
    b = (1.0 + e) / 2.0
    snapshot = v.copy()
    accepted = 0
    for i, j, u in zip(ii, jj, uu):
        if j >= i:
            j += 1
        vi = v[i]
        vj = v[j]
        r = vi - vj if vi > vj else vj - vi
        if r > lam:
            v[:] = snapshot
            return False
        if u < r:
            ni = a * vi + b * vj
            nj = b * vi + a * vj
            v[i] = ni
            v[j] = nj
            accepted += 1
            if log is not None:
                log.pre.append((vi, vj))
                log.post.append((ni, nj))
    stats["candidates"] += n_cand
    stats["collisions"] += accepted
    return True


def _advance(v, e, dt, rng, stats, log, depth=0):
    ok = _step(v, e, dt, rng, stats, log)
    if ok:
        return
    if depth > 40:
        raise RuntimeError("sub-stepping did not resolve the majorant bound")
    stats["substeps"] += 1
    _advance(v, e, dt / 2.0, rng, stats, log, depth + 1)
    _advance(v, e, dt / 2.0, rng, stats, log, depth + 1)


def dsmc_run(
    initial: ParticleState,
    e: float,
    T: float,
    dt: float,
    seed: int,
    *,
    replica: int = 0,
    record_every: int = 1,
    diagnostics: bool = True,
    collision_log: CollisionLog | None = None,
) -> Trajectory:
    """Simulate one replica; deterministic in ``(seed, replica)``.

    Steps whose expected candidate count exceeds the per-particle bound, or
    in which an acceptance ratio above one is met, are split in halves; the
    number of splits is reported in ``traj.info["substeps"]``.
    """
    e = fn.check_restitution(e)
    if initial.n < 2:
        raise ValueError("DSMC needs at least two particles")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    rng = replica_rng(seed, replica)
    v = initial.velocities.tolist()
    t0 = float(initial.time)
    n_steps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    stats = {"candidates": 0, "collisions": 0, "substeps": 0}
    times = [t0]
    states = [np.array(v)]
    for step in range(1, n_steps + 1):
        h = T - (n_steps - 1) * dt if step == n_steps else dt
        _advance(v, e, h, rng, stats, collision_log)
        if step % record_every == 0 or step == n_steps:
            times.append(t0 + T if step == n_steps else t0 + step * dt)
            states.append(np.array(v))
    vel = np.array(states)
    traj = Trajectory(np.array(times), vel, e)
    traj.info.update(
        n=int(vel.shape[1]), dt=float(dt), steps=int(n_steps), record_every=int(record_every),
        seed=int(seed), replica=int(replica), **stats,
    )
    if diagnostics:
        traj.diagnostics = diagnostics_table(vel, e)
        # Boltzmann energy dissipation rate (1 - e^2)/8 * S instead of the aggregation one
        traj.diagnostics["boltzmann_dissipation"] = (
            (1.0 + e) / 2.0 * traj.diagnostics["dissipation"]
        )
    return traj


def weak_operator_boltzmann(f: DiscreteMeasure, phi: TestFunction, e: float) -> float:
    """``1/2 sum_{i != j} w_i w_j |v_i - v_j| (phi(v') + phi(v'_*) - phi(v_i) - phi(v_j))``."""
    e = fn.check_restitution(e)
    v, w = f.positions, f.weights
    vi = v[:, None]
    vj = v[None, :]
    a = (1.0 - e) / 2.0
    b = (1.0 + e) / 2.0
    vp = a * vi + b * vj
    vps = b * vi + a * vj
    gain_loss = phi.value(vp) + phi.value(vps) - phi.value(vi) - phi.value(vj)
    kern = np.abs(vi - vj)
    return 0.5 * float(np.einsum("i,ij,j->", w, kern * gain_loss, w))


def weak_operator_aggregation(f: DiscreteMeasure, phi: TestFunction, e: float) -> float:
    """``(1 - e)/4 sum_{i != j} |v_i - v_j| (v_i - v_j) (phi'(v_j) - phi'(v_i)) w_i w_j``."""
    e = fn.check_restitution(e)
    v, w = f.positions, f.weights
    d = v[:, None] - v[None, :]
    dphi = phi.derivative(v)
    grad = dphi[None, :] - dphi[:, None]
    return (1.0 - e) / 4.0 * float(np.einsum("i,ij,j->", w, np.abs(d) * d * grad, w))
