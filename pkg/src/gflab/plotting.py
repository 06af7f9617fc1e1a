"""Figures written next to the CSV/JSON outputs of a run.

Uses the non-interactive Agg backend; every function saves one PNG and
closes its figure.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (4.8, 3.2),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # no timestamps or version strings in the file
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def energy_decay(path, t, energy, *, band=None, fit_window=None, slope=None, title="kinetic energy"):
    """Log-log energy curve, optionally with a confidence band and the fitted slope."""
    t = np.asarray(t, dtype=float)
    energy = np.asarray(energy, dtype=float)
    keep = (t > 0) & (energy > 0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(t[keep], energy[keep], color="C0", label="E(t)")
        if band is not None:
            lo, hi = (np.asarray(b, dtype=float)[keep] for b in band)
            ax.fill_between(t[keep], np.maximum(lo, 1e-300), hi, color="C0", alpha=0.25, lw=0, label="95% CI")
        if fit_window is not None and slope is not None:
            a, b = fit_window
            sel = keep & (t >= a) & (t <= b)
            if np.count_nonzero(sel) >= 2:
                t0 = t[sel][0]
                e0 = energy[sel][0]
                ref = e0 * (t[sel] / t0) ** slope
                ax.loglog(t[sel], ref, "--", color="C3", label=f"slope {slope:.3f}")
        ax.set_xlabel("t")
        ax.set_ylabel("E")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def particle_paths(path, t, velocities, max_lines: int = 64):
    """Velocity of (at most ``max_lines``) particles against time."""
    vel = np.asarray(velocities)
    idx = np.unique(np.linspace(0, vel.shape[1] - 1, min(max_lines, vel.shape[1])).astype(int))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, vel[:, idx], color="k", lw=0.5, alpha=0.6)
        ax.set_xlabel("t")
        ax.set_ylabel("v")
        ax.set_title("particle velocities")
        return _save(fig, path)


def diagnostics_panel(path, t, diagnostics: dict):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name in ("energy", "dissipation", "interaction_energy"):
            if name in diagnostics:
                ax.semilogy(t, np.maximum(diagnostics[name], 1e-300), label=name.replace("_", " "))
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def grid_path(path, times, masses, nodes):
    """Heat map of the masses along a transport path."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        mesh = ax.pcolormesh(nodes, times, masses, shading="nearest", cmap="viridis")
        fig.colorbar(mesh, ax=ax, label="mass")
        ax.set_xlabel("v")
        ax.set_ylabel("path time")
        return _save(fig, path)


def descent_trace(path, trace):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(np.arange(len(trace)), trace, marker=".", ms=3)
        ax.set_xlabel("iteration")
        ax.set_ylabel("path action")
        ax.set_yscale("log")
        return _save(fig, path)


def comparison(path, series: dict):
    """Ensemble-mean ``d_1`` curves, one per restitution coefficient."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key, s in series.items():
            ax.plot(s["t"], s["d1_mean"], label=key)
        ax.set_xlabel("t")
        ax.set_ylabel("mean d1 (DSMC vs aggregation)")
        ax.legend()
        return _save(fig, path)


def residual_scaling(path, one_minus_e, residuals: dict):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, R in residuals.items():
            R = np.asarray(R, dtype=float)
            if np.all(R > 0):
                ax.loglog(one_minus_e, R, marker="o", ms=3, label=name)
        ax.set_xlabel("1 - e")
        ax.set_ylabel("|B - A|")
        ax.legend()
        return _save(fig, path)


def stability(path, eps, sup_d1):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(eps, sup_d1, marker="o", ms=3)
        ax.set_xlabel("perturbation size")
        ax.set_ylabel("sup_t d1")
        return _save(fig, path)
