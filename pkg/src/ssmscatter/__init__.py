"""Geodesics of standard stationary spacetimes, their reduction to
magnetic-potential (MP) systems, boundary scattering data, gauges and
simplicity diagnostics."""

from .errors import *  # noqa: F401,F403
from .manifold import ManifoldSpec, ball, assemble_g, christoffel_g, christoffel_h, convert_tilde
from .flow import SpacetimeState, TrajectoryM, geodesic_rhs, hamiltonian_H, integrate_geodesic, momentum_J
from .reduction import MPSystem, integrate_mp, lift, mass_energy_check, project, reduce, rescale_momentum
from .scattering import (
    BoundaryTangent,
    ScatteringRecord,
    action_boundary,
    reconstruct_S_rho_m,
    scattering_mp,
    scattering_rho_m,
)
from .audit import admissible_band, hyperbolic_angle, lorentzian_convexity_bridge, mp_convexity, shoot_connect
from .gauge import GaugeTransform, apply_gauge_mp, apply_gauge_ssm, radial_gauge, verify_scattering_invariance
from .lightlike import magnetic_system, null_convexity, null_normalize, null_project
from . import gallery

__version__ = "0.1.0"
