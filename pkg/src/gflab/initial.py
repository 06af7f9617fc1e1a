"""Initial particle velocities."""

from __future__ import annotations

import math

import numpy as np

from . import io as gio
from .measures import recenter_velocities, sample_velocities, standard_normal_density


def velocities(name: str, params: dict, n: int, seed: int, base_dir: str = ".") -> np.ndarray:
    """``n`` initial velocities with zero mean (before ``center`` is added).

    * ``normal``: standard normal draws, support truncated to ``[-8, 8]``;
    * ``uniform``: uniform on ``[-sqrt(3), sqrt(3)]`` (unit variance);
    * ``twopoint``: ``+1`` for the first half of the particles and ``-1`` for the rest;
    * ``file``: atoms of a measure file, each repeated ``n w_i`` times.

    ``scale`` multiplies and ``center`` shifts the result.
    """
    scale = float(params.get("scale", 1.0))
    center = float(params.get("center", 0.0))
    if name == "normal":
        v = sample_velocities(standard_normal_density, (-8.0, 8.0), n, seed, recenter=True)
    elif name == "uniform":
        r = math.sqrt(3.0)
        v = sample_velocities(lambda x: np.ones_like(x), (-r, r), n, seed, recenter=True)
    elif name == "twopoint":
        if n % 2:
            raise ValueError("twopoint initial data needs an even particle count")
        v = np.concatenate([np.ones(n // 2), -np.ones(n // 2)])
    elif name == "file":
        from pathlib import Path

        path = Path(params["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        f = gio.read_measure(path)
        counts = f.weights * n
        reps = np.rint(counts).astype(int)
        if np.any(np.abs(counts - reps) > 1e-9 * n) or reps.sum() != n:
            raise ValueError(f"weights in {path} are not multiples of 1/{n}")
        return scale * np.repeat(f.positions, reps) + center
    else:
        raise ValueError(f"unknown initial data {name!r}")
    if name != "twopoint":
        v = recenter_velocities(v)
    return scale * v + center


def from_config(cfg) -> np.ndarray:
    name, params = cfg.init_spec()
    return velocities(name, params, cfg.n, cfg.seed, cfg.base_dir)
