"""Scalar functionals on discrete measures.

Every double sum runs over ordered pairs ``i != j`` and uses the surrogate
collision kernel ``sigma_e(r) = (1 - e) / 4 * r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .measures import DiscreteMeasure

#: Above this many atoms the odd pair moments use the sorted prefix-sum path.
PAIR_SUM_DIRECT_MAX = 1024


def check_restitution(e: float) -> float:
    e = float(e)
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"restitution e must lie in [0, 1], got {e!r}")
    return e


def sigma_e(r, e: float):
    return (1.0 - e) / 4.0 * np.abs(r)


def alpha(s, u):
    """``u**2 / s`` for ``s > 0``, ``0`` when ``u == 0`` and ``+inf`` otherwise."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.zeros(np.broadcast(s, u).shape)
    s, u = np.broadcast_arrays(s, u)
    pos = s > 0
    out[pos] = u[pos] ** 2 / s[pos]
    out[~pos & (u != 0)] = np.inf
    return out


class PairFlux:
    """Antisymmetric pair density ``U(v_i, v_j)`` on a fixed support.

    Only the strict upper triangle is stored (row-major, ``np.triu_indices``
    order); ``U_ji = -U_ij`` and the diagonal is absent.
    """

    __slots__ = ("support", "upper")

    def __init__(self, support, upper):
        support = np.asarray(support, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = support.size
        if upper.shape != (n * (n - 1) // 2,):
            raise ValueError("upper-triangular flux has the wrong length for its support")
        support.setflags(write=False)
        upper.setflags(write=False)
        self.support = support
        self.upper = upper

    def __len__(self):
        return self.support.size

    @classmethod
    def zeros(cls, support) -> "PairFlux":
        n = np.asarray(support).size
        return cls(support, np.zeros(n * (n - 1) // 2))

    @classmethod
    def from_matrix(cls, support, mat, atol: float = 0.0) -> "PairFlux":
        mat = np.asarray(mat, dtype=float)
        if np.max(np.abs(mat + mat.T), initial=0.0) > atol:
            raise ValueError("flux is not antisymmetric")
        iu = np.triu_indices(mat.shape[0], k=1)
        return cls(support, mat[iu])

    @classmethod
    def from_function(cls, support, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "PairFlux":
        """Flux ``U_ij = fn(v_i, v_j)``; ``fn`` must be antisymmetric."""
        support = np.asarray(support, dtype=float)
        i, j = np.triu_indices(support.size, k=1)
        return cls(support, fn(support[i], support[j]))

    @classmethod
    def gradient(cls, support, g) -> "PairFlux":
        """Gradient-form flux ``U_ij = g_j - g_i``."""
        g = np.asarray(g, dtype=float)
        i, j = np.triu_indices(g.size, k=1)
        return cls(support, g[j] - g[i])

    def matrix(self) -> np.ndarray:
        n = self.support.size
        mat = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        mat[iu] = self.upper
        mat.T[iu] = -self.upper
        return mat

    def __neg__(self) -> "PairFlux":
        return PairFlux(self.support, -self.upper)

    def __add__(self, other: "PairFlux") -> "PairFlux":
        if not np.array_equal(self.support, other.support):
            raise ValueError("flux supports differ")
        return PairFlux(self.support, self.upper + other.upper)

    def __mul__(self, c: float) -> "PairFlux":
        return PairFlux(self.support, c * self.upper)

    __rmul__ = __mul__


def antisymmetrize(support, R) -> PairFlux:
    """Antisymmetric part ``(R - R^T) / 2`` of an arbitrary pair assignment."""
    R = np.asarray(R, dtype=float)
    return PairFlux.from_matrix(support, 0.5 * (R - R.T))


def gradient_flow_flux(support) -> PairFlux:
    """Flux ``U_ij = v_i - v_j`` driven by the kinetic energy."""
    return PairFlux.from_function(support, lambda v, vs: v - vs)


# --------------------------------------------------------------------------
# pair sums

def pair_abs_cubic_sum(v: np.ndarray, w: np.ndarray) -> float:
    """``sum_{i != j} |v_i - v_j|^3 w_i w_j``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.size < 2:
        return 0.0
    if v.size <= PAIR_SUM_DIRECT_MAX:
        r = np.abs(v[:, None] - v[None, :])
        return float(np.einsum("i,ij,j->", w, r * r * r, w))
    order = np.argsort(v, kind="stable")
    x = v[order]
    x = x - np.dot(w[order], x)
    ww = w[order]
    # sum_{i<j} w_i w_j (x_j - x_i)^3, expanded with exclusive prefix sums
    c0 = np.cumsum(ww) - ww
    c1 = np.cumsum(ww * x) - ww * x
    c2 = np.cumsum(ww * x * x) - ww * x * x
    c3 = np.cumsum(ww * x**3) - ww * x**3
    terms = ww * (x**3 * c0 - 3.0 * x * x * c1 + 3.0 * x * c2 - c3)
    return float(2.0 * np.sum(terms))


def kinetic_energy(f: DiscreteMeasure) -> float:
    return 0.5 * float(np.dot(f.weights, f.positions**2))


def dissipation(f: DiscreteMeasure, e: float) -> float:
    e = check_restitution(e)
    return (1.0 - e) / 4.0 * pair_abs_cubic_sum(f.positions, f.weights)


def interaction_energy(f: DiscreteMeasure, e: float) -> float:
    """Nonlocal interaction energy for ``W(v) = (1 - e) / 6 |v|^3``."""
    e = check_restitution(e)
    return 0.5 * (1.0 - e) / 6.0 * pair_abs_cubic_sum(f.positions, f.weights)


def action(f: DiscreteMeasure, U, e: float) -> float:
    """Action density ``sum_{i != j} U_ij^2 sigma_e(|v_i - v_j|) w_i w_j``.

    ``U`` is a :class:`PairFlux` on the atoms of ``f`` or a full ``n x n``
    pair assignment (not necessarily antisymmetric).  A nonzero flux on a
    pair with ``w_i w_j = 0`` gives ``inf``.
    """
    e = check_restitution(e)
    v, w = f.positions, f.weights
    if isinstance(U, PairFlux):
        if U.support.shape != v.shape or not np.array_equal(U.support, v):
            raise ValueError("flux support does not match the measure's atoms")
        i, j = np.triu_indices(v.size, k=1)
        mass = w[i] * w[j]
        if np.any((mass == 0) & (U.upper != 0)):
            return math.inf
        # each unordered pair appears twice with the same squared value
        return 2.0 * float(np.sum(U.upper**2 * sigma_e(v[i] - v[j], e) * mass))
    R = np.asarray(U, dtype=float)
    if R.shape != (v.size, v.size):
        raise ValueError("pair assignment does not match the measure's atoms")
    mass = np.outer(w, w)
    off = ~np.eye(v.size, dtype=bool)
    if np.any(off & (mass == 0) & (R != 0)):
        return math.inf
    kern = sigma_e(v[:, None] - v[None, :], e)
    return float(np.sum(np.where(off, R**2 * kern * mass, 0.0)))


def action_of_measures(support, pair_mass, pair_flux, e: float) -> float:
    """``sum alpha(mu_ij, U_ij) sigma_e`` for pair measures given as ``n x n`` arrays.

    ``pair_mass`` plays the role of ``f (x) f`` (or any nonnegative pair
    measure) and ``pair_flux`` the flux measure ``U`` itself, not its density.
    """
    e = check_restitution(e)
    v = np.asarray(support, dtype=float)
    off = ~np.eye(v.size, dtype=bool)
    kern = sigma_e(v[:, None] - v[None, :], e)
    a = alpha(pair_mass, pair_flux)
    return float(np.sum(np.where(off, a * kern, 0.0)))


def trapezoid(values, times) -> float:
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def de_giorgi(traj, e: float) -> float:
    """``E(f_T) - E(f_0) + 1/2 int A dt + 1/2 int D dt`` by trapezoidal quadrature.

    ``traj`` needs ``times``, ``measure(k)`` and per-time ``fluxes``.
    """
    e = check_restitution(e)
    if getattr(traj, "fluxes", None) is None:
        raise ValueError("fluxes required")
    times = np.asarray(traj.times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    acts = np.empty(times.size)
    diss = np.empty(times.size)
    for k in range(times.size):
        f = traj.measure(k)
        acts[k] = action(f, traj.fluxes[k], e)
        diss[k] = dissipation(f, e)
    e0 = kinetic_energy(traj.measure(0))
    eT = kinetic_energy(traj.measure(times.size - 1))
    return eT - e0 + 0.5 * trapezoid(acts, times) + 0.5 * trapezoid(diss, times)


class FluxSequence(Sequence):
    """Lazily built per-time fluxes, ``build(k) -> PairFlux``."""

    def __init__(self, length: int, build: Callable[[int], PairFlux]):
        self._length = length
        self._build = build

    def __len__(self):
        return self._length

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(self._length))]
        if k < 0:
            k += self._length
        if not 0 <= k < self._length:
            raise IndexError(k)
        return self._build(k)
