"""Particle approximation of the aggregation equation with cubic potential.

Each of ``n`` equal-weight particles follows

    dv_i/dt = -(2/n) sum_j sigma_e(|v_i - v_j|) (v_i - v_j)
            = -(1 - e)/(2n) sum_j |v_i - v_j| (v_i - v_j),

integrated with fixed-step classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .measures import DiscreteMeasure, empirical

#: Largest particle count for which the force uses the direct pairwise sum.
DIRECT_FORCE_MAX = 512
#: Largest particle count for which the action column is evaluated from the flux itself.
FLUX_ACTION_MAX = 512


@dataclass(frozen=True)
class ParticleState:
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.velocities, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("need at least one particle")
        v.setflags(write=False)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self) -> int:
        return self.velocities.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


@dataclass
class Trajectory:
    """Recorded particle states.

    ``fluxes[k]`` is the pair flux attached to ``measure(k)``; ``diagnostics``
    maps column names to arrays aligned with ``times``.
    """

    times: np.ndarray
    velocities: np.ndarray  # (K, n)
    e: float
    fluxes: object = None
    diagnostics: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    @property
    def n(self) -> int:
        return self.velocities.shape[1]

    def measure(self, k: int) -> DiscreteMeasure:
        return empirical(self.velocities[k])

    def reversed(self) -> "Trajectory":
        """Time-reversed curve ``t -> f_{T - t}`` with negated fluxes."""
        T = self.times[-1]
        times = (T - self.times[::-1]) + self.times[0]
        fluxes = None
        if self.fluxes is not None:
            src = self.fluxes
            K = len(self.times)
            fluxes = fn.FluxSequence(K, lambda k: -src[K - 1 - k])
        diags = {k: v[::-1].copy() for k, v in self.diagnostics.items()}
        return Trajectory(times, self.velocities[::-1].copy(), self.e, fluxes, diags, dict(self.info))


def _force_direct(v: np.ndarray) -> np.ndarray:
    d = v[:, None] - v[None, :]
    return np.sum(np.abs(d) * d, axis=1)


def _force_sorted(v: np.ndarray) -> np.ndarray:
    # sum_j sign(v_i - v_j) (v_i - v_j)^2 from prefix sums over sorted velocities
    order = np.argsort(v, kind="stable")
    x = v[order]
    x = x - np.mean(x)
    n = x.size
    idx = np.arange(n)
    a1 = np.cumsum(x) - x
    a2 = np.cumsum(x * x) - x * x
    t1, t2 = a1[-1] + x[-1], a2[-1] + x[-1] ** 2
    b1 = t1 - a1 - x
    b2 = t2 - a2 - x * x
    left = idx * x * x - 2.0 * x * a1 + a2
    right = (n - 1 - idx) * x * x - 2.0 * x * b1 + b2
    out = np.empty(n)
    out[order] = left - right
    # the exact field sums to zero; remove the prefix-sum round-off
    return out - np.mean(out)


def rhs(state, e: float) -> np.ndarray:
    """Velocity field of the particle system."""
    e = fn.check_restitution(e)
    v = state.velocities if isinstance(state, ParticleState) else np.asarray(state, dtype=float)
    n = v.size
    if n == 1 or e == 1.0:
        return np.zeros(n)
    force = _force_direct(v) if n <= DIRECT_FORCE_MAX else _force_sorted(v)
    return -(1.0 - e) / (2.0 * n) * force


def diagnostics_table(vel: np.ndarray, e: float) -> dict[str, np.ndarray]:
    """Energy, dissipation, gradient-flux action and interaction energy per recorded state."""
    K, n = vel.shape
    energy = 0.5 * np.mean(vel * vel, axis=1)
    cubic = np.empty(K)
    act = np.empty(K)
    if n <= FLUX_ACTION_MAX:
        w2 = 1.0 / (n * n)
        batch = max(1, 2**22 // (n * n))
        for s in range(0, K, batch):
            block = vel[s : s + batch]
            d = block[:, :, None] - block[:, None, :]
            r = np.abs(d)
            cubic[s : s + batch] = np.sum(r * r * r, axis=(1, 2)) * w2
            # literal action sum with U_ij = v_i - v_j
            act[s : s + batch] = np.sum(d * d * fn.sigma_e(d, e), axis=(1, 2)) * w2
    else:
        w = np.full(n, 1.0 / n)
        for k in range(K):
            cubic[k] = fn.pair_abs_cubic_sum(vel[k], w)
        act[:] = (1.0 - e) / 4.0 * cubic
    return {
        "energy": energy,
        "dissipation": (1.0 - e) / 4.0 * cubic,
        "action": act,
        "interaction_energy": (1.0 - e) / 12.0 * cubic,
    }


def integrate(
    initial: ParticleState,
    e: float,
    T: float,
    dt: float,
    *,
    record_every: int = 1,
    diagnostics: bool = True,
) -> Trajectory:
    """Fixed-step RK4 from ``initial.time`` to ``initial.time + T``.

    States are recorded every ``record_every`` steps and at the final time.
    When ``T`` is not a multiple of ``dt`` the last step is shortened.
    """
    e = fn.check_restitution(e)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n_steps = int(np.ceil(T / dt - 1e-9)) if T > 0 else 0
    v = initial.velocities.copy()
    t0 = float(initial.time)
    times = [t0]
    states = [v.copy()]
    c = (1.0 - e) / (2.0 * v.size)
    force = _force_direct if v.size <= DIRECT_FORCE_MAX else _force_sorted
    frozen = v.size == 1 or e == 1.0
    for step in range(1, n_steps + 1):
        h = T - (n_steps - 1) * dt if step == n_steps else dt
        if not frozen:
            k1 = -c * force(v)
            k2 = -c * force(v + 0.5 * h * k1)
            k3 = -c * force(v + 0.5 * h * k2)
            k4 = -c * force(v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % record_every == 0 or step == n_steps:
            times.append(t0 + T if step == n_steps else t0 + step * dt)
            states.append(v.copy())
    times = np.array(times)
    vel = np.array(states)
    traj = Trajectory(times, vel, e)
    traj.fluxes = fn.FluxSequence(len(times), lambda k: fn.gradient_flow_flux(traj.measure(k).positions))
    traj.info.update(n=int(vel.shape[1]), dt=float(dt), steps=int(n_steps), record_every=int(record_every))
    if diagnostics:
        traj.diagnostics = diagnostics_table(vel, e)
    return traj


def two_particle_exact(t, e: float, r0: float = 2.0, center: float = 0.0):
    """Closed-form velocities of two particles; ``r' = -(1 - e) r^2 / 2``."""
    t = np.asarray(t, dtype=float)
    r = r0 / (1.0 + (1.0 - e) * abs(r0) * t / 2.0)
    return center + 0.5 * r, center - 0.5 * r
