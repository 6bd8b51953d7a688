"""Stabilized mixed finite elements for stationary Stokes-Darcy flow.

MINI elements for the free flow, BDM1 velocity and continuous P1 head in
the porous medium, a penalty on the normal velocity jump across the
interface, a residual error estimator and an adaptive loop driven by
newest-vertex bisection.
"""
from .adaptivity import AdaptConfig, AdaptHistory, Problem, adapt_loop, mark
from .assembly import PhysicalParams, assemble_system
from .dofs import build_dof_layout
from .estimator import (
    AnalyticFields,
    DataProjection,
    EstimatorOptions,
    IndicatorField,
    compute_fluid_indicator,
    compute_h_norm,
    compute_oscillation,
    compute_porous_indicator,
    estimate,
)
from .manufactured import ManufacturedCase, exact_error, get_case, solve_case, verify_case
from .mesh import TwoRegionMesh, bisect, build_rectangle_benchmark, refine_uniform
from .solver import DiscreteSolution, SingularSystemError, evaluate_field, solve

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptHistory", "AnalyticFields", "DataProjection", "DiscreteSolution",
    "EstimatorOptions", "IndicatorField", "ManufacturedCase", "PhysicalParams", "Problem",
    "SingularSystemError", "TwoRegionMesh", "adapt_loop", "assemble_system", "bisect",
    "build_dof_layout", "build_rectangle_benchmark", "compute_fluid_indicator",
    "compute_h_norm", "compute_oscillation", "compute_porous_indicator", "estimate",
    "evaluate_field", "exact_error", "get_case", "mark", "refine_uniform", "solve",
    "solve_case", "verify_case",
]
