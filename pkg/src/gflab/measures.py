"""Finitely supported probability measures on the real line.

A :class:`DiscreteMeasure` is either *empirical* (arbitrary sorted atoms) or
*grid* (masses on every node of a fixed uniform grid, zeros allowed).  All
functionals in the package are double sums over atoms, so both kinds share
one type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

WEIGHT_SUM_TOL = 1e-12
MERGE_RTOL = 1e-14

EMPIRICAL = "empirical"
GRID = "grid"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``v_min, ..., v_max`` with ``m`` nodes."""

    v_min: float
    v_max: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("grid needs at least 2 nodes")
        if not self.v_max > self.v_min:
            raise ValueError("grid needs v_max > v_min")

    @property
    def h(self) -> float:
        return (self.v_max - self.v_min) / (self.m - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.m)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"vmin:vmax:m"``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be vmin:vmax:m, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def __str__(self) -> str:
        return f"{self.v_min!r}:{self.v_max!r}:{self.m}"


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    positions: np.ndarray
    weights: np.ndarray
    kind: str = EMPIRICAL
    grid: GridSpec | None = field(default=None)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pos.ndim != 1 or pos.shape != w.shape or pos.size == 0:
            raise ValueError("positions and weights must be equal-length 1-D arrays")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise ValueError("positions and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if self.kind == GRID:
            if self.grid is None:
                raise ValueError("grid measure needs a GridSpec")
            if not np.array_equal(pos, self.grid.nodes):
                raise ValueError("grid measure positions differ from the declared grid")
        elif self.kind == EMPIRICAL:
            if np.any(np.diff(pos) <= 0):
                raise ValueError("positions must be strictly increasing; use empirical()")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.positions.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.grid == other.grid
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.positions))

    def moment(self, p: float) -> float:
        return moment(self, p)

    def support(self) -> "DiscreteMeasure":
        """Empirical copy with zero-weight atoms dropped."""
        keep = self.weights > 0
        return DiscreteMeasure(self.positions[keep], self.weights[keep])

    # predicates for the subsets P_1, P_1^cm, P_2^cm; finitely supported
    # measures always have finite moments, so only the centre matters
    def is_centered(self, tol: float = 1e-12) -> bool:
        return abs(self.mean()) <= tol * (1.0 + np.max(np.abs(self.positions)))


def empirical(positions, weights=None, rtol: float = MERGE_RTOL) -> DiscreteMeasure:
    """Build an empirical measure, sorting atoms and merging near-duplicates.

    Atoms closer than ``rtol * span`` are merged by adding their weights;
    the merged atom keeps the position of the first atom in its cluster.
    """
    pos = np.asarray(positions, dtype=float).ravel()
    if weights is None:
        w = np.full(pos.size, 1.0 / pos.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
    order = np.argsort(pos, kind="stable")
    pos, w = pos[order], w[order]
    span = pos[-1] - pos[0] if pos.size else 0.0
    thresh = rtol * span
    new_cluster = np.empty(pos.size, dtype=bool)
    new_cluster[:1] = True
    new_cluster[1:] = np.diff(pos) > thresh
    starts = np.flatnonzero(new_cluster)
    merged_w = np.add.reduceat(w, starts) if pos.size else w
    return DiscreteMeasure(pos[starts], merged_w)


def dirac(c: float) -> DiscreteMeasure:
    return DiscreteMeasure(np.array([float(c)]), np.array([1.0]))


def on_grid(masses, grid: GridSpec) -> DiscreteMeasure:
    return DiscreteMeasure(grid.nodes, np.asarray(masses, dtype=float), kind=GRID, grid=grid)


def to_grid(f: DiscreteMeasure, grid: GridSpec, tol: float = 1e-9) -> DiscreteMeasure:
    """Place the atoms of ``f`` on the nodes of ``grid``.

    Every atom must sit on a node up to ``tol * h``; otherwise ``ValueError``.
    """
    if f.kind == GRID and f.grid == grid:
        return f
    nodes = grid.nodes
    idx = np.rint((f.positions - grid.v_min) / grid.h).astype(int)
    if np.any(idx < 0) or np.any(idx >= grid.m):
        raise ValueError("measure has atoms outside the grid")
    if np.any(np.abs(nodes[idx] - f.positions) > tol * grid.h):
        raise ValueError("measure has atoms off the grid nodes")
    masses = np.zeros(grid.m)
    np.add.at(masses, idx, f.weights)
    return on_grid(masses, grid)


def moment(f: DiscreteMeasure, p: float) -> float:
    """``sum_i w_i |v_i|^p``; ``moment(f, 1)`` is the first absolute moment."""
    if p <= 0:
        raise ValueError("moment order must be positive")
    return float(np.dot(f.weights, np.abs(f.positions) ** p))


def mean(f: DiscreteMeasure) -> float:
    return f.mean()


def _quantile_pieces(f: DiscreteMeasure, g: DiscreteMeasure):
    """Common refinement of the two cumulative weight partitions.

    Returns the lengths of the quantile sub-intervals and the (piecewise
    constant) quantile values of ``f`` and ``g`` on each of them.
    """
    cf = np.cumsum(f.weights)
    cg = np.cumsum(g.weights)
    cf[-1] = cg[-1] = 1.0
    breaks = np.union1d(cf, cg)
    breaks = breaks[(breaks > 0.0) & (breaks <= 1.0)]
    lengths = np.diff(np.concatenate(([0.0], breaks)))
    # quantile on (q_{k-1}, q_k] is the first atom whose cumulative weight reaches q_k
    qf = f.positions[np.minimum(np.searchsorted(cf, breaks, side="left"), len(f) - 1)]
    qg = g.positions[np.minimum(np.searchsorted(cg, breaks, side="left"), len(g) - 1)]
    return lengths, qf, qg


def wasserstein(f: DiscreteMeasure, g: DiscreteMeasure, p: int = 1) -> float:
    """Exact 1-D ``p``-Wasserstein distance via quantile functions."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    lengths, qf, qg = _quantile_pieces(f, g)
    diff = np.abs(qf - qg)
    if p == 1:
        return float(np.dot(lengths, diff))
    return math.sqrt(float(np.dot(lengths, diff * diff)))


def wasserstein_equal_weights(a: np.ndarray, b: np.ndarray) -> float:
    """``d_1`` between two equal-weight particle clouds of the same size."""
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def sample_from_density(
    density: Callable[[np.ndarray], np.ndarray],
    support: tuple[float, float],
    n: int,
    seed: int,
    *,
    recenter: bool = False,
    quadrature_points: int = 2**14 + 1,
) -> DiscreteMeasure:
    """Empirical measure of ``n`` i.i.d. draws from an unnormalised density.

    Inverse-CDF sampling on a fine trapezoidal quadrature grid over
    ``support``.  With ``recenter=True`` the atoms are shifted so that the
    empirical mean is zero.
    """
    return empirical(
        sample_velocities(density, support, n, seed, recenter=recenter, quadrature_points=quadrature_points)
    )


def sample_velocities(density, support, n, seed, *, recenter=False, quadrature_points=2**14 + 1):
    """Raw particle velocities behind :func:`sample_from_density` (unsorted)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = map(float, support)
    if not b > a:
        raise ValueError("support must be an interval (a, b) with b > a")
    x = np.linspace(a, b, quadrature_points)
    rho = np.asarray(density(x), dtype=float)
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise ValueError("density must be finite and nonnegative")
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(x))))
    total = cdf[-1]
    if not total > 0:
        raise ValueError("degenerate density")
    cdf /= total
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    # flat stretches of the cdf are skipped by keeping the strictly increasing part
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    v = np.interp(u, cdf[keep], x[keep])
    if recenter:
        v = recenter_velocities(v)
    return v


def recenter_velocities(v: np.ndarray) -> np.ndarray:
    """Shift to zero mean; a second pass moves the leftover round-off into the last atom."""
    v = np.asarray(v, dtype=float) - np.mean(v)
    v[-1] -= np.sum(v)
    return v


def standard_normal_density(x):
    return np.exp(-0.5 * np.asarray(x) ** 2)
