"""``sda`` command-line driver.

    sda <command> [--config FILE] [--mesh FILE | --benchmark NXxNY] [--case NAME]
        [--out DIR] [--theta F] [--delta F] [--levels N]

Commands: solve, estimate, adapt, convergence.  Configuration files hold
flat ``key = value`` lines; command-line flags override them.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptivity import AdaptConfig, Problem, adapt_loop
from .estimator import EstimatorOptions, compute_h_norm, estimate
from .io import (
    ConfigError,
    read_config,
    write_convergence_csv,
    write_history_csv,
    write_indicator_csv,
    write_solution_vtk,
)
from .manufactured import case_names, get_case
from .mesh import MeshError, build_rectangle_benchmark, read_mesh, refine_uniform, write_mesh
from .solver import SolverError, solve

COMMANDS = ("solve", "estimate", "adapt", "convergence")
MASS_TRACES = ("porous", "fluid")
PHYSICAL_KEYS = ("nu", "alpha", "rho_g", "K11", "K12", "K22")


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    mesh: str | None = None
    benchmark: str = "4x4"
    case: str = "polynomial"
    out: str = "out"
    theta: float = 0.5
    delta: float = 1.0
    levels: int = 4
    max_iterations: int = 6
    max_dofs: int = 10**6
    threshold: float = 0.0
    div_penalty: float = 1.0
    darcy_penalty: float = 1.0
    mass_trace: str = "porous"
    scaled_tangential_jump: bool = False
    head_jump_boundary: bool = False
    data_degree: int = 10
    rtol: float = 1e-10
    nu: float | None = None
    alpha: float | None = None
    rho_g: float | None = None
    K11: float | None = None
    K12: float | None = None
    K22: float | None = None

    @classmethod
    def from_mapping(cls, values):
        """Build and validate from string or typed values; errors name the field."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in types:
                raise ConfigError(key, "unknown configuration key")
            t = types[key]
            try:
                if "bool" in t:
                    kw[key] = _bool(raw)
                elif "int" in t:
                    kw[key] = int(float(raw)) if isinstance(raw, str) else int(raw)
                elif "float" in t:
                    kw[key] = float(raw)
                else:
                    kw[key] = str(raw)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        if "command" not in kw:
            raise ConfigError("command", "missing")
        cfg = cls(**kw)
        cfg.validate(explicit_mesh="mesh" in kw, explicit_benchmark="benchmark" in kw)
        return cfg

    def validate(self, explicit_mesh=False, explicit_benchmark=False):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
        if explicit_mesh and explicit_benchmark:
            raise ConfigError("mesh", "give either a mesh file or a benchmark size, not both")
        if self.mesh is not None and not Path(self.mesh).is_file():
            raise ConfigError("mesh", f"file not found: {self.mesh}")
        if self.mesh is None:
            self.benchmark_size()
        if self.case not in case_names():
            raise ConfigError("case", f"unknown case; choose from {', '.join(case_names())}")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta", "must lie in (0, 1]")
        for name in ("delta", "rtol"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        for name in ("div_penalty", "darcy_penalty", "threshold"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be non-negative")
        if self.levels < 1:
            raise ConfigError("levels", "must be at least 1")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations", "must be non-negative")
        if self.max_dofs <= 0:
            raise ConfigError("max_dofs", "must be positive")
        if self.mass_trace not in MASS_TRACES:
            raise ConfigError("mass_trace", f"must be one of {', '.join(MASS_TRACES)}")
        if not 0 <= self.data_degree <= 21:
            raise ConfigError("data_degree", "must lie in [0, 21]")
        self._check_physical()

    def benchmark_size(self):
        try:
            nx, ny = (int(v) for v in self.benchmark.lower().split("x"))
        except ValueError:
            raise ConfigError("benchmark", f"expected NXxNY, got {self.benchmark!r}") from None
        if nx < 1 or ny < 2 or ny % 2:
            raise ConfigError("benchmark", "need NX >= 1 and an even NY >= 2")
        return nx, ny

    def _check_physical(self):
        # the data of a manufactured case are derived from its own parameters
        params = get_case(self.case).params
        K = np.asarray(params.K, dtype=float)
        case_values = {"nu": params.nu, "alpha": params.alpha, "rho_g": params.rho_g,
                       "K11": K[0, 0], "K12": K[0, 1], "K22": K[1, 1]}
        for key in PHYSICAL_KEYS:
            v = getattr(self, key)
            if v is not None and not math.isclose(v, case_values[key], rel_tol=1e-12, abs_tol=1e-14):
                raise ConfigError(
                    key, f"case {self.case!r} is defined with {key} = {case_values[key]!r}"
                )

    # -- derived objects ----------------------------------------------------------

    def initial_mesh(self):
        if self.mesh is not None:
            return read_mesh(self.mesh)
        return build_rectangle_benchmark(*self.benchmark_size())

    def problem(self):
        case = get_case(self.case)
        params = dataclasses.replace(
            case.params, delta=self.delta, div_penalty=self.div_penalty,
            darcy_penalty=self.darcy_penalty,
        )
        return Problem.from_case(case, params)

    def estimator_options(self):
        return EstimatorOptions(self.scaled_tangential_jump, self.head_jump_boundary,
                                self.data_degree)


def _solve(cfg, problem, mesh):
    return solve(problem.assemble(mesh, cfg.mass_trace), rtol=cfg.rtol)


def run_solve(cfg):
    problem, mesh = cfg.problem(), cfg.initial_mesh()
    sol = _solve(cfg, problem, mesh)
    path = write_solution_vtk(Path(cfg.out) / "solution.vtk", sol)
    err = compute_h_norm(sol, problem.exact).total
    print(f"ndof {sol.layout.ndof}  residual {sol.residual:.3e}  err_h_norm {err:.6e}")
    print(f"wrote {path}")


def run_estimate(cfg):
    problem, mesh = cfg.problem(), cfg.initial_mesh()
    sol = _solve(cfg, problem, mesh)
    ind = estimate(sol, problem.params, problem.f_f, problem.f_p, cfg.estimator_options())
    path = write_indicator_csv(Path(cfg.out) / "indicators.csv", ind)
    print(f"ndof {sol.layout.ndof}  theta {ind.theta:.6e}  zeta {ind.zeta:.6e}")
    print(f"wrote {path}")


def run_adapt(cfg):
    problem, mesh = cfg.problem(), cfg.initial_mesh()
    acfg = AdaptConfig(cfg.theta, cfg.max_iterations, cfg.max_dofs, cfg.threshold,
                       cfg.estimator_options())
    history = adapt_loop(problem, mesh, acfg, cfg.mass_trace)
    out = Path(cfg.out)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    for rec, m in zip(history.records, history.meshes):
        write_mesh(out / "meshes" / f"iter_{rec.iteration:02d}.msh", m)
    write_solution_vtk(out / "solution.vtk", history.solution)
    path = write_history_csv(out / "history.csv", history)
    for r in history.records:
        print(f"iter {r.iteration}  ndof {r.ndof}  theta {r.theta:.4e}  err {r.err_h_norm:.4e}")
    print(f"wrote {path}")


def convergence_rows(cfg):
    problem, mesh = cfg.problem(), cfg.initial_mesh()
    opts = cfg.estimator_options()
    rows = []
    for level in range(cfg.levels):
        if level:
            mesh = refine_uniform(mesh)
        sol = _solve(cfg, problem, mesh)
        ind = estimate(sol, problem.params, problem.f_f, problem.f_p, opts)
        err = compute_h_norm(sol, problem.exact).total
        rate = math.nan
        if rows and err > 0 and rows[-1]["err_h_norm"] > 0:
            rate = math.log(rows[-1]["err_h_norm"] / err) / math.log(rows[-1]["h"] / mesh.h)
        rows.append({"level": level, "h": mesh.h, "ndof": sol.layout.ndof, "err_h_norm": err,
                     "theta": ind.theta, "zeta": ind.zeta, "rate": rate})
    return rows


def run_convergence(cfg):
    rows = convergence_rows(cfg)
    path = write_convergence_csv(Path(cfg.out) / "convergence.csv", rows)
    for r in rows:
        print(f"level {r['level']}  ndof {r['ndof']}  err {r['err_h_norm']:.4e}  rate {r['rate']:.3f}")
    print(f"wrote {path}")


RUNNERS = {"solve": run_solve, "estimate": run_estimate, "adapt": run_adapt,
           "convergence": run_convergence}


def build_parser():
    ap = argparse.ArgumentParser(prog="sda", description="Stabilized Stokes-Darcy solver")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value configuration file")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="mesh file")
    src.add_argument("--benchmark", help="benchmark mesh size NXxNY")
    ap.add_argument("--case", help="manufactured case name")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--theta", type=float, help="marking fraction")
    ap.add_argument("--delta", type=float, help="interface stabilization weight")
    ap.add_argument("--levels", type=int, help="uniform refinement levels")
    return ap


def run(config):
    """Execute a validated :class:`RunConfig`; returns the exit status."""
    try:
        RUNNERS[config.command](config)
    except (SolverError, MeshError) as exc:
        print(f"sda: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    values = {}
    try:
        if args.config:
            if not Path(args.config).is_file():
                raise ConfigError("config", f"file not found: {args.config}")
            values.update(read_config(args.config))
        if args.mesh is not None:
            values.pop("benchmark", None)
        if args.benchmark is not None:
            values.pop("mesh", None)
        values.update({k: v for k, v in vars(args).items() if k != "config" and v is not None})
        cfg = RunConfig.from_mapping(values)
    except ConfigError as exc:
        print(f"sda: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
