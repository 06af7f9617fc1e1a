"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible metric
problem, 4 failed verification check.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io as gio
from .config import ConfigError, SimConfig

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_FAILED = 0, 2, 3, 4

# defaults per command; a config file and then flags override them
DEFAULTS = {
    "aggregate": dict(dynamics="aggregate", n=100, e=0.5, T=5.0, dt=1e-3, record_every=10),
    "boltzmann": dict(dynamics="boltzmann", n=2000, e=0.5, T=10.0, dt=0.05, replicas=10, record_every=2),
    "metric": dict(e=0.0, K=32, iters=20),
    "haff": dict(dynamics="aggregate", n=1000, e=0.5, T=200.0, dt=0.1, record_every=10),
    "de_giorgi": dict(dynamics="aggregate", n=100, e=0.5, T=5.0, dt=1e-3),
    "taylor_link": dict(n=1000, init="normal"),
    "compare": dict(dynamics="boltzmann", n=2000, T=10.0, dt=0.05, replicas=10, record_every=2),
    "stability": dict(dynamics="aggregate", n=2, e=0.0, init="twopoint", T=10.0, dt=1e-3, perturbations=5),
}

EXPERIMENTS = ("haff", "de_giorgi", "taylor_link", "compare", "stability")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (flags override its entries)")
    p.add_argument("--seed", type=int, help="random seed (always wins over the config)")
    p.add_argument("--out", help="output directory (relative paths live under $GFL_OUT if set)")
    p.add_argument("--threads", type=int, help="worker processes for independent replicas (default 1)")
    p.add_argument("--validate", action="store_true", help="re-parse every written file afterwards")
    p.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG figures")


def _dynamics_flags(p: argparse.ArgumentParser, replicas=False):
    p.add_argument("--n", type=int, help="particle count")
    p.add_argument("--e", type=float, help="restitution coefficient in [0, 1]")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--init", help="normal | uniform | twopoint | path to a measure file")
    p.add_argument("--record-every", dest="record_every", type=int, help="record every k-th step")
    if replicas:
        p.add_argument("--replicas", type=int, help="independent DSMC replicas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gflab", description="Inelastic collision dynamics laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="particle flow of the aggregation equation")
    _dynamics_flags(p)
    _common(p)

    p = sub.add_parser("boltzmann", help="DSMC simulation of the inelastic Boltzmann equation")
    _dynamics_flags(p, replicas=True)
    _common(p)

    p = sub.add_parser("metric", help="upper bound on the collision transport cost between two grid measures")
    p.add_argument("--mu0", help="measure file (CSV or JSON)")
    p.add_argument("--mu1", help="measure file (CSV or JSON)")
    p.add_argument("--grid", help="vmin:vmax:m")
    p.add_argument("--e", type=float)
    p.add_argument("--K", type=int, help="time intervals of the path")
    p.add_argument("--iters", type=int, help="descent iterations")
    _common(p)

    p = sub.add_parser("verify", help="run one verification experiment")
    p.add_argument("experiment", choices=EXPERIMENTS)
    _dynamics_flags(p, replicas=True)
    p.add_argument("--dynamics", choices=cfgmod.DYNAMICS)
    p.add_argument("--e-list", dest="e_list", type=lambda s: [float(x) for x in s.split(",")], help="comma-separated")
    p.add_argument("--perturbations", type=int)
    _common(p)

    p = sub.add_parser("compare", help="DSMC versus aggregation distance sweep over e")
    _dynamics_flags(p, replicas=True)
    p.add_argument("--e-list", dest="e_list", type=lambda s: [float(x) for x in s.split(",")], help="comma-separated")
    _common(p)
    return parser


FLAG_KEYS = ("n", "e", "T", "dt", "init", "record_every", "replicas", "dynamics", "e_list", "perturbations", "mu0", "mu1", "grid", "K", "iters", "threads")


def make_config(args, preset: str) -> SimConfig:
    """Preset defaults, then the config file, then flags; ``--seed`` always wins."""
    defaults = DEFAULTS[preset]
    if args.config:
        loaded = cfgmod.load(args.config, **defaults)
        merged, base = loaded.to_dict(), loaded.base_dir
    else:
        merged, base = dict(defaults), "."
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is None:
            continue
        # file flags are relative to the working directory, not to the config file
        if key in ("mu0", "mu1", "init") and val not in cfgmod.INIT_NAMES:
            val = str(Path(val).resolve())
        merged[key] = val
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.out is not None:
        merged["out"] = args.out
    return SimConfig(**merged, base_dir=base)


def output_dir(cfg: SimConfig, name: str) -> Path:
    out = Path(cfg.out) if cfg.out else Path("runs") / name
    return out if out.is_absolute() else cfgmod.output_root() / out


# --------------------------------------------------------------------------
# commands


def _finish(report, out: Path, figures: bool, args, start: float, extra_figures=None) -> int:
    report.runtime = time.perf_counter() - start
    report.write(out / "report.json")
    meta = report.metadata()
    meta["argv"] = list(args._argv)
    gio.write_json(out / "metadata.json", meta)
    if figures and extra_figures is not None:
        extra_figures()
    if args.validate:
        problems = gio.validate_dir(out)
        if problems:
            for p in problems:
                print(p, file=sys.stderr)
            raise CliError(EXIT_CONFIG, "output validation failed")
    print(f"{report.summary()} -> {out}")
    return EXIT_FAILED if report.failed else EXIT_OK


def cmd_aggregate(args) -> int:
    from . import initial, plotting, verification
    from .aggregation import ParticleState, integrate

    start = time.perf_counter()
    cfg = make_config(args, "aggregate")
    out = output_dir(cfg, "aggregate")
    v0 = initial.from_config(cfg)
    traj = integrate(ParticleState(v0), cfg.e, cfg.T, cfg.dt, record_every=cfg.record_every)
    gio.write_trajectory(out / "trajectory.csv", traj.times, traj.velocities)
    gio.write_diagnostics(out / "diagnostics.csv", traj.times, traj.diagnostics)
    report = verification.aggregate_run_report(cfg, traj)

    def figs():
        plotting.energy_decay(out / "energy.png", traj.times, traj.diagnostics["energy"])
        plotting.particle_paths(out / "velocities.png", traj.times, traj.velocities)
        plotting.diagnostics_panel(out / "diagnostics.png", traj.times, traj.diagnostics)

    return _finish(report, out, args.figures, args, start, figs)


def cmd_boltzmann(args) -> int:
    from . import initial, plotting, verification
    from .aggregation import diagnostics_table

    start = time.perf_counter()
    cfg = make_config(args, "boltzmann")
    if cfg.n < 2:
        raise ConfigError("n", "DSMC needs at least two particles")
    out = output_dir(cfg, "boltzmann")
    v0 = initial.from_config(cfg)
    runs = verification.run_replicas(v0, cfg.e, cfg.T, cfg.dt, cfg.seed, cfg.replicas, cfg.record_every, cfg.threads)
    energies = []
    for r, (times, vel, _) in enumerate(runs):
        diag = diagnostics_table(vel, cfg.e)
        gio.write_diagnostics(out / f"replica_{r:03d}" / "diagnostics.csv", times, diag)
        energies.append(diag["energy"])
    summary = verification.ensemble_summary(runs[0][0], np.array(energies))
    report = verification.boltzmann_run_report(cfg, runs)
    from .report import SCHEMA_VERSION

    gio.write_json(out / "ensemble.json", {"schema_version": SCHEMA_VERSION, "confidence": 0.95, **summary})

    def figs():
        plotting.energy_decay(
            out / "energy.png", summary["t"], summary["energy_mean"], band=(summary["ci_low"], summary["ci_high"]),
            title=f"DSMC ensemble mean ({cfg.replicas} replicas)",
        )

    return _finish(report, out, args.figures, args, start, figs)


def cmd_metric(args) -> int:
    from . import gce, plotting
    from .measures import GridSpec
    from .report import RunReport

    start = time.perf_counter()
    cfg = make_config(args, "metric")
    for key in ("mu0", "mu1", "grid"):
        if getattr(cfg, key) is None:
            raise ConfigError(key, "required for the metric command")
    out = output_dir(cfg, "metric")
    spec = GridSpec.parse(cfg.grid)
    grid = gce.VelocityGrid.from_spec(spec)
    try:
        mu0 = gio.read_measure(cfg.resolve(cfg.mu0), grid=spec)
        mu1 = gio.read_measure(cfg.resolve(cfg.mu1), grid=spec)
    except ValueError as err:
        raise ConfigError("mu0/mu1", str(err)) from None
    report = RunReport("metric", {"e": cfg.e, "K": cfg.K, "iters": cfg.iters, "grid": cfg.grid, "mu0": cfg.mu0, "mu1": cfg.mu1})
    bound = gce.d_A_upper(mu0, mu1, grid, cfg.e, K=cfg.K, iters=cfg.iters)
    report.metrics.update(bound.as_dict())
    if bound.infinite:
        report.check("finite_bound", False, math.inf, "finite", bound.reason)
        report.runtime = time.perf_counter() - start
        report.write(out / "report.json")
        raise CliError(EXIT_INFEASIBLE, bound.reason)
    path = bound.path
    acts = gce.interval_actions(path, cfg.e)
    cols = {"t": path.times}
    for i in range(grid.m):
        cols[f"m_{i}"] = path.masses[:, i]
    gio.write_table(out / "path.csv", cols)
    gio.write_fluxes(out / "fluxes.bin", [u.upper for u in path.fluxes], grid.m)
    gap = float(np.max(gce.holder_gaps(path, cfg.e)))
    report.metrics["interval_actions"] = acts
    trace = np.array(bound.trace)
    mono = bool(np.all(np.diff(trace) <= 0))
    report.check("trace_monotone", mono, float(np.max(np.diff(trace), initial=0.0)), 0.0, "descent never increases the bound")
    report.check("holder_bound", gap <= 1e-6, gap, 1e-6, "max over s < t of d_1 minus the first-moment bound")

    def figs():
        plotting.grid_path(out / "path.png", path.times, path.masses, grid.nodes)
        plotting.descent_trace(out / "trace.png", bound.trace)

    return _finish(report, out, args.figures, args, start, figs)


def cmd_verify(args, experiment: str | None = None) -> int:
    from . import plotting, verification

    start = time.perf_counter()
    name = experiment or args.experiment
    cfg = make_config(args, name)
    out = output_dir(cfg, name)
    try:
        report = verification.EXPERIMENTS[name](cfg)
    except verification.ExperimentError as err:
        raise CliError(EXIT_CONFIG, str(err)) from None
    series = report.series

    def figs():
        if name == "haff":
            plotting.energy_decay(
                out / "energy.png", series["t"], series["energy"],
                fit_window=report.metrics.get("fit_window"), slope=report.metrics.get("haff_slope"),
            )
        elif name == "de_giorgi":
            plotting.diagnostics_panel(out / "diagnostics.png", series["t"], series)
        elif name == "taylor_link":
            e_list = np.array(report.parameters["e_list"])
            res = {k[len("residual[") : -1]: v for k, v in report.metrics.items() if k.startswith("residual[")}
            plotting.residual_scaling(out / "residuals.png", 1.0 - e_list, res)
        elif name == "compare":
            plotting.comparison(out / "d1.png", series)
        elif name == "stability":
            plotting.stability(out / "stability.png", report.metrics["epsilon"], report.metrics["sup_d1"])

    if name == "haff":
        gio.write_table(out / "energy.csv", {"t": series["t"], "energy": series["energy"]})
    elif name == "compare":
        for key, s in series.items():
            gio.write_table(out / f"d1_{key.replace('=', '')}.csv", {"t": s["t"], "d1_mean": s["d1_mean"]})
    return _finish(report, out, args.figures, args, start, figs)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    args._argv = argv
    from .gce import InfeasibleError

    try:
        if args.command == "aggregate":
            return cmd_aggregate(args)
        if args.command == "boltzmann":
            return cmd_boltzmann(args)
        if args.command == "metric":
            return cmd_metric(args)
        if args.command == "compare":
            return cmd_verify(args, "compare")
        return cmd_verify(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


def main() -> None:
    sys.exit(run())
