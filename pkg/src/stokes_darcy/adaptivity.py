"""Solve, estimate, mark and refine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_system
from .dofs import build_dof_layout
from .estimator import AnalyticFields, EstimatorOptions, IndicatorField, compute_h_norm, estimate
from .mesh import bisect
from .solver import SolverError, solve


class AdaptError(RuntimeError):
    """A solve failed inside the loop; ``iteration`` says where."""

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclass(frozen=True)
class AdaptConfig:
    theta: float = 0.5
    max_iterations: int = 6
    max_dofs: int = 10**6
    threshold: float = 0.0
    estimator: EstimatorOptions = EstimatorOptions()

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.max_dofs <= 0:
            raise ValueError("max_dofs must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")


@dataclass(frozen=True)
class Problem:
    """Data of a coupled problem.

    ``boundary_values(layout)`` returns a dof vector with the lifted boundary
    data and ``pressure_integral(mesh)`` the target for the fluid integral of
    p_h.  ``exact`` is optional and enables true errors.
    """

    params: object
    f_f: object = None
    f_p: object = None
    boundary_values: object = None
    pressure_integral: object = None
    exact: AnalyticFields | None = None

    @classmethod
    def from_case(cls, case, params=None):
        return cls(
            case.params if params is None else params,
            case.f_f,
            case.f_p,
            case.boundary_values,
            case.pressure_integral,
            AnalyticFields.from_case(case),
        )

    def assemble(self, mesh, mass_trace="porous"):
        layout = build_dof_layout(mesh)
        bc = None if self.boundary_values is None else self.boundary_values(layout)
        target = 0.0 if self.pressure_integral is None else self.pressure_integral(mesh)
        return assemble_system(
            mesh, self.params, self.f_f, self.f_p, layout=layout, bc_values=bc,
            mean_target=target, mass_trace=mass_trace,
        )


@dataclass(frozen=True)
class AdaptRecord:
    iteration: int
    ndof: int
    n_elements: int
    theta: float
    zeta: float
    err_h_norm: float
    effectivity: float
    n_marked: int


@dataclass
class AdaptHistory:
    records: list = field(default_factory=list)
    meshes: list = field(default_factory=list)
    solution: object = None
    indicators: IndicatorField | None = None

    def append(self, record, mesh):
        if self.records and record.ndof < self.records[-1].ndof:
            raise ValueError("dof counts must not decrease")
        self.records.append(record)
        self.meshes.append(mesh)

    @property
    def mesh(self):
        return self.meshes[-1] if self.meshes else None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def mark(indicators, theta):
    """Minimal Dörfler set: largest indicators first, ties broken by element id.

    ``indicators`` is an :class:`IndicatorField` or an array of squared
    element indicators.  Returns sorted element ids.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta = indicators.theta_sq if isinstance(indicators, IndicatorField) else indicators
    eta = np.asarray(eta, dtype=float)
    if eta.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(eta.size), -eta))
    csum = np.cumsum(eta[order])
    total = csum[-1]
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    k = int(np.searchsorted(csum, theta * total, side="left"))
    return np.sort(order[: k + 1])


def adapt_loop(problem, mesh, config=AdaptConfig(), mass_trace="porous"):
    """Run the adaptive loop from an initial mesh.

    Iteration 0 solves on the initial mesh; each further iteration refines
    the marked elements by newest-vertex bisection.  The loop stops at the
    first of: Theta <= threshold, dof budget reached, ``max_iterations``
    refinements done.
    """
    history = AdaptHistory()
    it = 0
    while True:
        try:
            system = problem.assemble(mesh, mass_trace)
            sol = solve(system)
        except SolverError as exc:
            raise AdaptError(it, exc) from exc
        ind = estimate(sol, problem.params, problem.f_f, problem.f_p, config.estimator)
        err = math.nan
        eff = math.nan
        if problem.exact is not None:
            err = compute_h_norm(sol, problem.exact).total
            denom = ind.theta + ind.zeta
            eff = err / denom if denom > 0 else math.nan
        stop = (
            ind.theta <= config.threshold
            or sol.layout.ndof >= config.max_dofs
            or it >= config.max_iterations
        )
        marked = np.zeros(0, dtype=np.int64) if stop else mark(ind, config.theta)
        history.append(
            AdaptRecord(it, sol.layout.ndof, mesh.nt, ind.theta, ind.zeta, err, eff, marked.size),
            mesh,
        )
        history.solution = sol
        history.indicators = ind
        if stop or marked.size == 0:
            return history
        mesh = bisect(mesh, marked)
        it += 1
