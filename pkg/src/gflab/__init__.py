"""Numerical laboratory for inelastic collision dynamics in one velocity dimension.

Particle solvers for the cubic aggregation equation and the inelastic
Boltzmann equation, the functionals of their gradient-flow structure, and a
grid solver for minimal-action fluxes and transport-cost upper bounds.
"""

__version__ = "0.1.0"

from .measures import DiscreteMeasure, GridSpec, dirac, empirical, on_grid, wasserstein  # noqa: E402
from .functionals import (  # noqa: E402
    PairFlux,
    action,
    de_giorgi,
    dissipation,
    interaction_energy,
    kinetic_energy,
)
from .aggregation import ParticleState, Trajectory, integrate, rhs  # noqa: E402
from .boltzmann import collide, dsmc_run, weak_operator_aggregation, weak_operator_boltzmann  # noqa: E402
from .gce import VelocityGrid, d_A_upper, discrete_divergence, minimal_flux, path_action  # noqa: E402

__all__ = [
    "DiscreteMeasure",
    "GridSpec",
    "PairFlux",
    "ParticleState",
    "Trajectory",
    "VelocityGrid",
    "action",
    "collide",
    "d_A_upper",
    "de_giorgi",
    "dirac",
    "discrete_divergence",
    "dissipation",
    "dsmc_run",
    "empirical",
    "integrate",
    "interaction_energy",
    "kinetic_energy",
    "minimal_flux",
    "on_grid",
    "path_action",
    "rhs",
    "wasserstein",
    "weak_operator_aggregation",
    "weak_operator_boltzmann",
]
