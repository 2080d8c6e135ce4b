"""Nonisometric surface registration via conformally deformed LB bases.

The package jointly optimizes a per-vertex conformal factor and a
deformed orthonormal spectral basis on a target surface so that feature
coefficients match those of a fixed source basis, then reads off a dense
point-to-point correspondence by nearest-neighbor search in coefficient
space.
"""

__version__ = "0.1.0"

from . import errors
from .correspondence import (
    Correspondence,
    functional_map_apply,
    load_correspondence,
    point_to_point,
    save_correspondence,
)
from .eigensolver import (
    Eigensystem,
    eig_via_stiefel,
    load_eigensystem,
    save_eigensystem,
    solve_eigs,
)
from .estimator import LBBasisPursuit
from .evaluation import ErrorReport, geodesic_errors, ground_truth_conformal
from .features import (
    DiffusionBasis,
    FeatureSet,
    build_diffusion_basis,
    heat_features,
    indicator_features,
)
from .fem import HeatStepper, assemble_mass, assemble_stiffness, heat_step
from .geodesics import geodesic_distance, geodesic_distances
from .mesh import (
    TriangleMesh,
    load_landmarks,
    load_mesh,
    save_landmarks,
    save_off,
)
from .sampling import SampleHierarchy, farthest_point_sample
from .solver import (
    EnergyBreakdown,
    LbbpConfig,
    LbbpProblem,
    LbbpResult,
    LbbpState,
    bfgs_minimize_w,
    energy,
    grad_psibar,
    grad_w,
    recover_basis,
    solve,
    warm_start,
)
from .stiefel import CurvilinearParams, cayley_point, curvilinear_step
from .synthetic import deformed_sphere_pair, icosphere, sphere_mesh

__all__ = [
    "Correspondence",
    "CurvilinearParams",
    "DiffusionBasis",
    "Eigensystem",
    "EnergyBreakdown",
    "ErrorReport",
    "FeatureSet",
    "HeatStepper",
    "LBBasisPursuit",
    "LbbpConfig",
    "LbbpProblem",
    "LbbpResult",
    "LbbpState",
    "SampleHierarchy",
    "TriangleMesh",
    "assemble_mass",
    "assemble_stiffness",
    "bfgs_minimize_w",
    "build_diffusion_basis",
    "cayley_point",
    "curvilinear_step",
    "deformed_sphere_pair",
    "eig_via_stiefel",
    "energy",
    "errors",
    "farthest_point_sample",
    "functional_map_apply",
    "geodesic_distance",
    "geodesic_distances",
    "geodesic_errors",
    "grad_psibar",
    "grad_w",
    "ground_truth_conformal",
    "heat_features",
    "heat_step",
    "icosphere",
    "indicator_features",
    "load_correspondence",
    "load_eigensystem",
    "load_landmarks",
    "load_mesh",
    "point_to_point",
    "recover_basis",
    "save_correspondence",
    "save_eigensystem",
    "save_landmarks",
    "save_off",
    "solve",
    "solve_eigs",
    "sphere_mesh",
    "warm_start",
]
