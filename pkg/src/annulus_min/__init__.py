"""Energy-minimizing maps between annuli with conformal metrics.

Submodules: ``geometry`` (annuli, meshes), ``metrics`` (conformal densities),
``radial`` (radial harmonic families and Nitsche radii), ``energy``
(discrete energy and derivatives), ``solver`` (variational minimization),
``diagnostics`` (Hopf, quasiconformal and Hoelder checks), ``potential``
(Poisson and Green operators on the disk) and ``cli``.
"""
from .geometry import Annulus, Disk, PolarMesh, make_annulus, make_polar_mesh, modulus
from .metrics import Metric, RadialProfile
from .radial import gamma_diamond, nitsche_map, nitsche_radius, q_gamma, r_of_gamma
from .energy import DiscreteMap, dirichlet_energy, discrete_energy
from .solver import SolverConfig, minimize, init_map, estimate_nitsche_radius_variational

__version__ = "0.1.0"

__all__ = [
    "Annulus", "Disk", "PolarMesh", "make_annulus", "make_polar_mesh", "modulus",
    "Metric", "RadialProfile",
    "gamma_diamond", "nitsche_map", "nitsche_radius", "q_gamma", "r_of_gamma",
    "DiscreteMap", "dirichlet_energy", "discrete_energy",
    "SolverConfig", "minimize", "init_map", "estimate_nitsche_radius_variational",
]
