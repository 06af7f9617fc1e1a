"""Grid discretisation of the generalised continuity equation and the collision transport cost.

On a uniform grid ``v_0 < ... < v_{m-1}`` a test function is represented by its
node values and its derivative by ``D @ phi``.  For an antisymmetric pair flux
``U`` on a grid measure ``f`` the divergence is

    (div U)_k = -sum_j D_jk s_j,   s_j = 2 sum_i M_ij U_ij,
    M_ij = sigma_e(|v_i - v_j|) f_i f_j,

so ``d/dt f + div U = 0`` conserves mass and mean exactly.  The minimal
action flux for a prescribed rate ``rho`` has gradient form
``U_ij = g_j - g_i`` with ``g = D lam`` and ``K lam = rho``, where
``K = 2 D^T (diag(M 1) - M) D`` is symmetric positive semidefinite with
null space ``span{1, v}`` on full-support measures.  Its optimal action is
``lam . rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .measures import GRID, DiscreteMeasure, GridSpec, on_grid, to_grid, wasserstein

CG_RTOL = 1e-12
#: Relative residual above which a minimal-flux problem is declared infeasible.
FEASIBILITY_RTOL = 1e-8
COMPAT_TOL = 1e-10

MSG_MOMENTS = "infeasible: GCE preserves mass and centre of mass"
MSG_SUPPORT = "infeasible: disconnected support"


class InfeasibleError(ValueError):
    """No flux of finite action produces the requested change of mass."""

    def __init__(self, message: str, interval: int | None = None):
        self.reason = message
        self.interval = interval
        if interval is not None:
            message = f"{message} (interval {interval})"
        super().__init__(message)


class VelocityGrid:
    """Uniform grid with its derivative matrix ``D``."""

    def __init__(self, v_min: float, v_max: float, m: int):
        self.spec = GridSpec(float(v_min), float(v_max), int(m))
        self.nodes = self.spec.nodes
        self.h = self.spec.h
        self.m = self.spec.m
        self.D = _derivative_matrix(self.m, self.h)
        # orthonormal basis of span{1, v}, the null space of K on full support
        basis = np.stack([np.ones(self.m), self.nodes - self.nodes.mean()], axis=1)
        self._null = basis / np.linalg.norm(basis, axis=0)
        self.nodes.setflags(write=False)
        self.D.setflags(write=False)

    @classmethod
    def from_spec(cls, spec: GridSpec | str) -> "VelocityGrid":
        if isinstance(spec, str):
            spec = GridSpec.parse(spec)
        return cls(spec.v_min, spec.v_max, spec.m)

    def __eq__(self, other):
        return isinstance(other, VelocityGrid) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"VelocityGrid({self.spec})"

    def measure(self, masses) -> DiscreteMeasure:
        return on_grid(masses, self.spec)

    def masses(self, f: DiscreteMeasure) -> np.ndarray:
        return to_grid(f, self.spec).weights


def _derivative_matrix(m: int, h: float) -> np.ndarray:
    D = np.zeros((m, m))
    if m == 2:
        D[:, 0], D[:, 1] = -1.0 / h, 1.0 / h
        return D
    i = np.arange(1, m - 1)
    D[i, i - 1] = -0.5 / h
    D[i, i + 1] = 0.5 / h
    D[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2.0 * h)
    D[-1, -3:] = np.array([1.0, -4.0, 3.0]) / (2.0 * h)
    return D


def pair_weights(masses: np.ndarray, grid: VelocityGrid, e: float) -> np.ndarray:
    """``M_ij = sigma_e(|v_i - v_j|) f_i f_j`` (zero diagonal)."""
    v = grid.nodes
    return fn.sigma_e(v[:, None] - v[None, :], e) * np.outer(masses, masses)


def _grid_masses(f, grid: VelocityGrid) -> np.ndarray:
    if isinstance(f, DiscreteMeasure):
        return grid.masses(f)
    w = np.asarray(f, dtype=float)
    if w.shape != (grid.m,):
        raise ValueError("mass vector does not match the grid")
    return w


def discrete_divergence(U: fn.PairFlux, f, grid: VelocityGrid, e: float) -> np.ndarray:
    """Nonlocal divergence of ``U`` at ``f``; ``d/dt f = -discrete_divergence(U, ...)``."""
    e = fn.check_restitution(e)
    w = _grid_masses(f, grid)
    if isinstance(U, fn.PairFlux):
        if U.support.size != grid.m or not np.array_equal(U.support, grid.nodes):
            raise ValueError("flux support does not match the grid")
        Umat = U.matrix()
    else:
        Umat = np.asarray(U, dtype=float)
        if Umat.shape != (grid.m, grid.m):
            raise ValueError("flux matrix does not match the grid")
        if not np.array_equal(Umat, -Umat.T):
            raise ValueError("flux is not antisymmetric")
    M = pair_weights(w, grid, e)
    s = 2.0 * np.sum(M * Umat, axis=0)
    return -(grid.D.T @ s)


def _operators(W: np.ndarray, grid: VelocityGrid, e: float) -> np.ndarray:
    """Stack of ``K = 2 D^T (diag(M 1) - M) D`` for mass rows ``W`` of shape ``(B, m)``."""
    v = grid.nodes
    sig = fn.sigma_e(v[:, None] - v[None, :], e)
    M = sig[None, :, :] * W[:, :, None] * W[:, None, :]
    lap = -M
    idx = np.arange(grid.m)
    lap[:, idx, idx] += M.sum(axis=2)
    D = grid.D
    K = 2.0 * (D.T @ lap @ D)
    return 0.5 * (K + np.swapaxes(K, 1, 2))


def check_compatible(rho: np.ndarray, grid: VelocityGrid) -> None:
    scale = COMPAT_TOL * max(1.0, float(np.sum(np.abs(rho))))
    if abs(float(np.sum(rho))) > scale or abs(float(np.dot(grid.nodes, rho))) > scale:
        raise InfeasibleError(MSG_MOMENTS)


def pcg(K: np.ndarray, b: np.ndarray, null: np.ndarray, rtol: float = CG_RTOL, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients on ``range(K)``, batched.

    ``K`` has shape ``(B, m, m)`` (or ``(m, m)``) and ``b`` matching
    right-hand sides.  ``null`` has orthonormal columns spanning part of
    the common null space; iterates and residuals are kept orthogonal to
    it.  Each system stops on its own once its residual drops below
    ``rtol`` times its right-hand side.  Returns ``(x, relative_residual,
    iterations)``.
    """
    single = K.ndim == 2
    if single:
        K, b = K[None], b[None]
    B, m = b.shape
    maxiter = 10 * m if maxiter is None else maxiter

    def project(x):
        return x - (x @ null) @ null.T

    def matvec(x):
        return np.einsum("bij,bj->bi", K, x)

    d = np.einsum("bii->bi", K)
    inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    b = project(b)
    bnorm = np.linalg.norm(b, axis=1)
    x = np.zeros((B, m))
    r = b.copy()
    done = bnorm == 0.0
    z = project(inv * r)
    p = z.copy()
    rz = np.sum(r * z, axis=1)
    it = 0
    while not done.all() and it < maxiter:
        it += 1
        Kp = matvec(p)
        pKp = np.sum(p * Kp, axis=1)
        live = ~done & (pKp > 0)
        done |= ~live
        a = np.where(live, rz / np.where(live, pKp, 1.0), 0.0)
        x += a[:, None] * p
        r -= a[:, None] * Kp
        done |= np.linalg.norm(r, axis=1) <= rtol * bnorm
        z = project(inv * r)
        rz_new = np.sum(r * z, axis=1)
        beta = np.where(~done, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        p = z + beta[:, None] * p
        rz = rz_new
    x = project(x)
    res = np.linalg.norm(b - matvec(x), axis=1) / np.where(bnorm > 0, bnorm, 1.0)
    if single:
        return x[0], float(res[0]), it
    return x, res, it


@dataclass
class FluxSolution:
    flux: fn.PairFlux
    g: np.ndarray
    lam: np.ndarray
    action: float
    residual: float
    iterations: int


def _solve_batch(W: np.ndarray, R: np.ndarray, grid: VelocityGrid, e: float):
    """Multipliers ``lam`` (rows) and actions for mass rows ``W`` and rates ``R``.

    Raises :class:`InfeasibleError` with the row index as ``interval``.
    """
    for k, rho in enumerate(R):
        try:
            check_compatible(rho, grid)
        except InfeasibleError as err:
            raise InfeasibleError(err.reason, interval=k) from None
    K = _operators(W, grid, e)
    lam, res, it = pcg(K, R, grid._null)
    redo = res > CG_RTOL
    if redo.any():
        # restart from the true residual; cheap insurance against loss of orthogonality
        corr, _, it2 = pcg(K[redo], R[redo] - np.einsum("bij,bj->bi", K[redo], lam[redo]), grid._null)
        lam[redo] += corr
        it += it2
    rnorm = np.linalg.norm(R, axis=1)
    res = np.linalg.norm(R - np.einsum("bij,bj->bi", K, lam), axis=1) / np.where(rnorm > 0, rnorm, 1.0)
    lam[rnorm == 0] = 0.0
    res[rnorm == 0] = 0.0
    bad = np.flatnonzero(~(res <= FEASIBILITY_RTOL))
    if bad.size:
        raise InfeasibleError(MSG_SUPPORT, interval=int(bad[0]))
    acts = np.maximum(np.sum(lam * R, axis=1), 0.0)
    return lam, acts, res, it


def _flux_from(lam: np.ndarray, w: np.ndarray, grid: VelocityGrid):
    g = grid.D @ lam
    i, j = np.triu_indices(grid.m, k=1)
    upper = g[j] - g[i]
    upper[w[i] * w[j] == 0] = 0.0
    return fn.PairFlux(grid.nodes, upper), g


def solve_minimal_flux(f, rho, grid: VelocityGrid, e: float) -> FluxSolution:
    """Minimal-action flux with all solver byproducts (see :func:`minimal_flux`)."""
    e = fn.check_restitution(e)
    w = _grid_masses(f, grid)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.m,):
        raise ValueError("rho does not match the grid")
    try:
        lam, acts, res, it = _solve_batch(w[None], rho[None], grid, e)
    except InfeasibleError as err:
        raise InfeasibleError(err.reason) from None
    flux, g = _flux_from(lam[0], w, grid)
    return FluxSolution(flux, g, lam[0], float(acts[0]), float(res[0]), it)


def minimal_flux(f, rho, grid: VelocityGrid, e: float) -> tuple[fn.PairFlux, np.ndarray]:
    """Flux of least action with ``-discrete_divergence(U) = rho``; returns ``(U, g)``.

    Raises :class:`InfeasibleError` when ``rho`` changes mass or mean, or
    when it needs flux through pairs of zero mass.
    """
    sol = solve_minimal_flux(f, rho, grid, e)
    return sol.flux, sol.g


def minimal_action(f, rho, grid: VelocityGrid, e: float) -> float:
    return solve_minimal_flux(f, rho, grid, e).action


# --------------------------------------------------------------------------
# paths


@dataclass
class GridPath:
    """Grid-measure states at increasing times, optionally with one flux per interval."""

    times: np.ndarray
    masses: np.ndarray  # (K+1, m)
    grid: VelocityGrid
    fluxes: list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 2 or self.masses.shape != (self.times.size, self.grid.m):
            raise ValueError("path masses must have shape (len(times), m)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must be strictly increasing")
        if np.any(self.masses < 0):
            raise ValueError("path masses must be nonnegative")
        if np.any(np.abs(self.masses.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("path states must have unit mass")
        if self.fluxes is not None and len(self.fluxes) != self.times.size - 1:
            raise ValueError("need one flux per interval")

    @classmethod
    def from_measures(cls, times, states, grid: VelocityGrid, fluxes=None) -> "GridPath":
        return cls(np.asarray(times), np.array([grid.masses(s) for s in states]), grid, fluxes)

    @property
    def intervals(self) -> int:
        return self.times.size - 1

    def state(self, k: int) -> DiscreteMeasure:
        return self.grid.measure(self.masses[k])

    def midpoint(self, k: int) -> np.ndarray:
        return 0.5 * (self.masses[k] + self.masses[k + 1])

    def rate(self, k: int) -> np.ndarray:
        return (self.masses[k + 1] - self.masses[k]) / (self.times[k + 1] - self.times[k])

    def reversed(self) -> "GridPath":
        times = self.times[0] + self.times[-1] - self.times[::-1]
        fluxes = None if self.fluxes is None else [-u for u in self.fluxes[::-1]]
        return GridPath(times, self.masses[::-1].copy(), self.grid, fluxes)


def interval_actions(path: GridPath, e: float, fill: bool = True) -> np.ndarray:
    """Action of each interval at midpoint masses.

    Missing fluxes are replaced by minimal fluxes (and stored on the path
    when ``fill`` is true).  Errors carry the interval index.
    """
    e = fn.check_restitution(e)
    mids = 0.5 * (path.masses[1:] + path.masses[:-1])
    if path.fluxes is None:
        rates = np.diff(path.masses, axis=0) / np.diff(path.times)[:, None]
        lam, acts, _, _ = _solve_batch(mids, rates, path.grid, e)
        if fill:
            path.fluxes = [_flux_from(lam[k], mids[k], path.grid)[0] for k in range(path.intervals)]
        return acts
    out = np.empty(path.intervals)
    for k in range(path.intervals):
        out[k] = fn.action(path.grid.measure(mids[k]), path.fluxes[k], e)
    return out


def path_action(path: GridPath, e: float) -> float:
    """``sum_k A(f_mid_k, U_k) dt_k`` over the intervals of ``path``."""
    acts = interval_actions(path, e)
    return float(np.sum(acts * np.diff(path.times)))


def holder_gaps(path: GridPath, e: float) -> np.ndarray:
    """``d_1(f_s, f_t) - sum_k sqrt(2 (1 - e) m_1(mid_k) A_k) dt_k`` for all recorded ``s < t``.

    Nonpositive entries mean the first-moment comparison bound holds.
    """
    e = fn.check_restitution(e)
    acts = interval_actions(path, e)
    dt = np.diff(path.times)
    v = path.grid.nodes
    m1 = np.array([np.dot(path.midpoint(k), np.abs(v)) for k in range(path.intervals)])
    speed = np.sqrt(2.0 * (1.0 - e) * m1 * acts) * dt
    cum = np.concatenate(([0.0], np.cumsum(speed)))
    n = path.times.size
    states = [path.state(k) for k in range(n)]
    gaps = np.full((n, n), -np.inf)
    for s in range(n):
        for t in range(s + 1, n):
            gaps[s, t] = wasserstein(states[s], states[t], 1) - (cum[t] - cum[s])
    return gaps


# --------------------------------------------------------------------------
# upper bounds on the transport cost


@dataclass
class MetricBound:
    """Upper bound on the squared cost over unit time (``action``) and its root."""

    action: float
    distance: float
    infinite: bool = False
    reason: str = ""
    trace: list = field(default_factory=list)
    path: GridPath | None = None
    upper_bound: bool = True

    def as_dict(self) -> dict:
        return {
            "action": self.action,
            "distance": self.distance,
            "infinite": self.infinite,
            "reason": self.reason,
            "upper_bound": self.upper_bound,
            "trace": list(self.trace),
        }


def _tilted_reference(mean: float, grid: VelocityGrid) -> np.ndarray:
    """Full-support grid measure ``~ exp(-v^2/2 + a v)`` with the given mean."""
    v = grid.nodes
    scale = grid.spec.v_max - grid.spec.v_min
    x = (v - v.mean()) / scale * 4.0

    def weights(a):
        z = -0.5 * x * x + a * x
        z -= z.max()
        w = np.exp(z)
        w = np.maximum(w, 1e-12)
        return w / w.sum()

    lo, hi = -200.0, 200.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.dot(weights(mid), v) < mean:
            lo = mid
        else:
            hi = mid
    w = weights(0.5 * (lo + hi))
    return _fix_mean(w, mean, grid)


def _fix_mean(w: np.ndarray, mean: float, grid: VelocityGrid) -> np.ndarray:
    """Shift the leftover mean error with a two-node correction that keeps mass."""
    v = grid.nodes
    w = w / w.sum()
    err = float(np.dot(w, v)) - mean
    if err != 0.0:
        j = int(np.argmax(w))
        k = j + 1 if j + 1 < grid.m else j - 1
        t = err / (v[k] - v[j])
        w = w.copy()
        w[k] -= t
        w[j] += t
    return w


def _path_objective(masses: np.ndarray, grid: VelocityGrid, e: float, dt: float):
    """Total action of a unit-time path and its multipliers (raises if infeasible)."""
    mids = 0.5 * (masses[1:] + masses[:-1])
    lam, acts, _, _ = _solve_batch(mids, np.diff(masses, axis=0) / dt, grid, e)
    return float(np.sum(acts) * dt), lam, mids


def _path_gradient(lam: np.ndarray, mids: np.ndarray, grid: VelocityGrid, e: float, dt: float) -> np.ndarray:
    """Gradient of the path action with respect to the interior states.

    Uses ``dA/drho = 2 lam`` and ``dA/df_k = -2 sum_j sigma_kj f_j (g_k - g_j)^2``
    at the midpoint masses.
    """
    v = grid.nodes
    sig = fn.sigma_e(v[:, None] - v[None, :], e)
    g = lam @ grid.D.T
    diff2 = (g[:, :, None] - g[:, None, :]) ** 2
    dmid = -2.0 * np.einsum("kij,kj->ki", sig[None] * diff2, mids)
    # interior state k is the right end of interval k-1 and the left end of interval k
    return 2.0 * (lam[:-1] - lam[1:]) + 0.5 * dt * (dmid[:-1] + dmid[1:])


def _project_rows(G: np.ndarray, free: np.ndarray, v: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Row-wise projection onto ``{z : z_fixed = 0, sum C z = 0, sum v C z = 0}``."""
    out = np.zeros_like(G)
    for k in range(G.shape[0]):
        idx = np.flatnonzero(free[k])
        if idx.size < 3:
            continue
        c = C[k, idx]
        A = np.stack([c, v[idx] * c])
        gk = G[k, idx]
        coef = np.linalg.solve(A @ A.T, A @ gk)
        out[k, idx] = gk - A.T @ coef
    return out


def _free_set(X: np.ndarray, G: np.ndarray, v: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Entries allowed to move: positive ones and zeros the descent pushes upward."""
    free = np.ones(X.shape, dtype=bool)
    for _ in range(X.shape[1]):
        d = -_project_rows(G, free, v, C)
        blocked = free & (X <= 0.0) & (d < 0.0)
        if not blocked.any():
            break
        free &= ~blocked
    return free


def _descent(masses, grid, e, dt, iters, trace, memory: int = 10, cycle: int = 50):
    """Projected L-BFGS on the interior states with a nonnegativity ratio test.

    The variables are rescaled as ``x = C z`` with ``C ~ sqrt(x)``, a
    Fisher-type preconditioner that tames the ``1/f`` growth of the
    gradient near empty nodes.  ``C`` is refreshed every ``cycle``
    accepted steps, which also clears the quasi-Newton memory.
    """
    v = grid.nodes
    best, lam, mids = _path_objective(masses, grid, e, dt)
    trace.append(best)
    if masses.shape[0] <= 2:
        return best
    G = _path_gradient(lam, mids, grid, e, dt)
    S, Y = [], []
    C = None
    since = 0
    restarted = False
    for _ in range(iters):
        X = masses[1:-1]
        if C is None or since >= cycle:
            floor = 1e-3 / grid.m
            C = np.sqrt(X + floor)
            S, Y = [], []
            since = 0
        Gz = C * G
        free = _free_set(X, Gz, v, C)
        pg = _project_rows(Gz, free, v, C)
        q = pg.copy()
        alphas = []
        for s_, y_ in reversed(list(zip(S, Y))):
            a = np.sum(s_ * q) / np.sum(y_ * s_)
            alphas.append(a)
            q -= a * y_
        if S:
            q *= np.sum(S[-1] * Y[-1]) / np.sum(Y[-1] * Y[-1])
        for (s_, y_), a in zip(zip(S, Y), reversed(alphas)):
            b = np.sum(y_ * q) / np.sum(y_ * s_)
            q += (a - b) * s_
        dz = -_project_rows(q, free, v, C)
        slope = float(np.sum(Gz * dz))
        if not slope < 0.0:
            dz = -pg
            slope = float(np.sum(Gz * dz))
            S, Y = [], []
        if not slope < 0.0:
            break
        d = C * dz
        neg = d < 0
        tmax = float(np.min(-X[neg] / d[neg])) if neg.any() else math.inf
        t = min(1.0 if S else min(1.0, 0.1 * best / -slope), tmax)
        accepted = False
        for _bt in range(40):
            trial = masses.copy()
            step = np.maximum(X + t * d, 0.0)
            if t == tmax:
                step[neg & (X + t * d <= 1e-15 * np.max(X))] = 0.0
            trial[1:-1] = step
            try:
                val, lam_t, mids_t = _path_objective(trial, grid, e, dt)
            except InfeasibleError:
                val = math.inf
            if val <= best + 1e-4 * t * slope and val < best:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if restarted:
                break
            S, Y = [], []
            C = None
            restarted = True
            continue
        restarted = False
        G_new = _path_gradient(lam_t, mids_t, grid, e, dt)
        s_vec = (trial[1:-1] - X) / C
        y_vec = _project_rows(C * G_new, free, v, C) - pg
        if np.sum(s_vec * y_vec) > 1e-12 * np.sqrt(np.sum(s_vec**2) * np.sum(y_vec**2)):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        masses[:] = trial
        best, G = val, G_new
        since += 1
        trace.append(best)
    return best


def d_A_upper(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    grid: VelocityGrid,
    e: float,
    K: int = 32,
    iters: int = 20,
) -> MetricBound:
    """Upper bound on the squared collision transport cost between two grid measures.

    The path starts as linear interpolation of masses over unit time with
    ``K`` intervals; when that path needs flux through empty pairs it is
    blended with a full-support reference of the same mean.  Interior
    states are then improved by projected quasi-Newton steps that are
    accepted only on decrease, so ``trace`` is non-increasing.
    """
    e = fn.check_restitution(e)
    if K < 1:
        raise ValueError("K must be >= 1")
    a = grid.masses(mu0)
    b = grid.masses(mu1)
    if np.array_equal(a, b):
        return MetricBound(0.0, 0.0, trace=[0.0])
    v = grid.nodes
    if abs(np.dot(a, v) - np.dot(b, v)) > COMPAT_TOL * (1.0 + np.max(np.abs(v))):
        return MetricBound(math.inf, math.inf, infinite=True, reason=MSG_MOMENTS)
    if e == 1.0:
        return MetricBound(math.inf, math.inf, infinite=True, reason="infeasible: sigma_e vanishes for e = 1")
    # canonical orientation makes the result exactly symmetric in its arguments
    flip = tuple(a.tolist()) > tuple(b.tolist())
    if flip:
        a, b = b, a
    tau = np.linspace(0.0, 1.0, K + 1)
    dt = 1.0 / K
    masses = (1.0 - tau)[:, None] * a[None, :] + tau[:, None] * b[None, :]
    # make both endpoints carry exactly the same mean as the interior
    masses[0], masses[-1] = a, b
    trace: list = []
    try:
        _path_objective(masses, grid, e, dt)
    except InfeasibleError:
        ref = _tilted_reference(float(np.dot(a, v)), grid)
        bump = 0.5 * 4.0 * tau * (1.0 - tau)
        masses = (1.0 - bump)[:, None] * masses + bump[:, None] * ref[None, :]
    try:
        best = _descent(masses, grid, e, dt, iters, trace)
    except InfeasibleError as err:
        return MetricBound(math.inf, math.inf, infinite=True, reason=err.reason)
    if flip:
        masses = masses[::-1].copy()
    path = GridPath(tau, masses, grid)
    return MetricBound(best, math.sqrt(best), trace=trace, path=path)
