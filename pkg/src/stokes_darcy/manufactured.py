"""Closed-form solutions of the coupled problem on the unit square.

The fluid occupies y > 1/2 and the porous medium y < 1/2, so on the
interface n_f = (0, -1) and tau = (1, 0).  Every case is built from a
stream function for u_f (so div u_f = 0 exactly) and a head phi with
u_p = -K grad phi; free coefficients are fixed by solving the three
interface conditions symbolically.  Boundary data that do not vanish are
imposed by interpolation (lifting).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import sympy as sy

from .assembly import PhysicalParams, assemble_system
from .dofs import build_dof_layout
from .elements import map_to_physical
from .estimator import AnalyticFields, compute_h_norm
from .quadrature import make_quadrature
from .solver import interpolate, solve

X, Y = sy.symbols("x y", real=True)
INTERFACE_Y = sy.Rational(1, 2)
N_F = (0, -1)
TAU = (1, 0)


class CaseViolation(ValueError):
    def __init__(self, condition, violation):
        super().__init__(f"condition {condition} violated by {violation:.3e}")
        self.condition = condition
        self.violation = violation


def _lambdify_scalar(expr):
    f = sy.lambdify((X, Y), expr, "numpy")

    def call(pts):
        pts = np.asarray(pts, dtype=float)
        out = f(pts[..., 0], pts[..., 1])
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    return call


def _lambdify_array(exprs):
    parts = [_lambdify_scalar(e) for e in exprs]

    def call(pts):
        return np.stack([f(pts) for f in parts], axis=-1)

    return call


def _sym_grad(vec):
    return sy.Matrix([[sy.diff(c, v) for v in (X, Y)] for c in vec])


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """Exact fields with matching data.

    Symbolic expressions are kept in ``expr``; callables accepting points of
    shape (..., 2) are exposed as attributes.
    """

    name: str
    params: PhysicalParams
    K: tuple
    expr: dict
    smooth: bool = True
    lifted: bool = False
    in_discrete_space: bool = False
    description: str = ""
    flags: dict = field(default_factory=dict)

    @classmethod
    def from_expressions(cls, name, nu, alpha, K, rho_g, u_f, p, phi, **kw):
        """Build a case from u_f, p and phi; u_p, f_f and f_p are derived."""
        nu, alpha, rho_g = sy.nsimplify(nu), sy.nsimplify(alpha), sy.nsimplify(rho_g)
        Km = sy.Matrix(K).applyfunc(sy.nsimplify)
        u_f = sy.Matrix(u_f)
        grad_phi = sy.Matrix([sy.diff(phi, X), sy.diff(phi, Y)])
        u_p = -Km * grad_phi
        Gu = _sym_grad(u_f)
        D = (Gu + Gu.T) / 2
        div_D = sy.Matrix([sy.diff(D[i, 0], X) + sy.diff(D[i, 1], Y) for i in range(2)])
        f_f = sy.simplify(-2 * nu * div_D + sy.Matrix([sy.diff(p, X), sy.diff(p, Y)]))
        f_p = sy.simplify(sy.diff(u_p[0], X) + sy.diff(u_p[1], Y))
        expr = {
            "u_f": u_f, "p": p, "phi": phi, "u_p": u_p, "f_f": f_f, "f_p": f_p,
            "nu": nu, "alpha": alpha, "rho_g": rho_g, "K": Km,
        }
        Kf = np.array(Km.tolist(), dtype=float)
        params = PhysicalParams(nu=float(nu), alpha=float(alpha), rho=float(rho_g), g=1.0, K=Kf)
        return cls(name, params, tuple(map(tuple, Kf.tolist())), expr, **kw)

    def __post_init__(self):
        e = self.expr
        fns = {
            "u_f": _lambdify_array(list(e["u_f"])),
            "grad_u_f": _lambdify_array([c for c in _sym_grad(e["u_f"])]),
            "p": _lambdify_scalar(e["p"]),
            "grad_p": _lambdify_array([sy.diff(e["p"], X), sy.diff(e["p"], Y)]),
            "u_p": _lambdify_array(list(e["u_p"])),
            "div_u_p": _lambdify_scalar(sy.diff(e["u_p"][0], X) + sy.diff(e["u_p"][1], Y)),
            "phi": _lambdify_scalar(e["phi"]),
            "grad_phi": _lambdify_array([sy.diff(e["phi"], X), sy.diff(e["phi"], Y)]),
            "f_f": _lambdify_array(list(e["f_f"])),
            "f_p": _lambdify_scalar(e["f_p"]),
        }
        object.__setattr__(self, "_fns", fns)

    def __getattr__(self, name):
        fns = self.__dict__.get("_fns", {})
        if name in fns:
            return fns[name]
        raise AttributeError(name)

    def grad_u_f_matrix(self, pts):
        return self.grad_u_f(pts).reshape(np.shape(pts)[:-1] + (2, 2))

    # -- discretization helpers ---------------------------------------------

    def boundary_values(self, layout):
        """Dof vector holding the lifted boundary data on constrained dofs."""
        full = interpolate(layout, u_f=self.u_f, u_p=self.u_p)
        out = np.zeros(layout.ndof)
        cons = layout.constrained
        out[cons] = full[cons]
        return out

    def pressure_integral(self, mesh, degree=6):
        rule = make_quadrature("triangle", degree)
        tris = np.flatnonzero(mesh.region == 0)
        x = map_to_physical(mesh, tris, rule.reference_points)
        w = 2.0 * mesh.areas[tris][:, None] * rule.weights
        return float((w * self.p(x)).sum())


def verify_case(case, tol=1e-10, n=1000, seed=0):
    """Sample the PDEs and interface conditions; raise :class:`CaseViolation`.

    Returns a dict of maximum absolute violations per condition.
    """
    e = case.expr
    nu, alpha, rg, K = e["nu"], e["alpha"], e["rho_g"], e["K"]
    u, p, phi, up = e["u_f"], e["p"], e["phi"], e["u_p"]
    Gu = _sym_grad(u)
    D = (Gu + Gu.T) / 2
    div_D = sy.Matrix([sy.diff(D[i, 0], X) + sy.diff(D[i, 1], Y) for i in range(2)])
    grad_phi = sy.Matrix([sy.diff(phi, X), sy.diff(phi, Y)])
    n_f, tau = sy.Matrix(N_F), sy.Matrix(TAU)
    n_p = -n_f
    conds = {
        "momentum": (-2 * nu * div_D + sy.Matrix([sy.diff(p, X), sy.diff(p, Y)]) - e["f_f"], "fluid"),
        "incompressibility": (sy.Matrix([sy.diff(u[0], X) + sy.diff(u[1], Y)]), "fluid"),
        "darcy": (up + K * grad_phi, "porous"),
        "mass": (sy.Matrix([sy.diff(up[0], X) + sy.diff(up[1], Y) - e["f_p"]]), "porous"),
        "cd1": (sy.Matrix([(u.T * n_f)[0] + (up.T * n_p)[0]]), "interface"),
        "cd2": (sy.Matrix([p - 2 * nu * (n_f.T * D * n_f)[0] - rg * phi]), "interface"),
        "cd3": (
            sy.Matrix([-2 * nu * (n_f.T * D * tau)[0]
                       - alpha / sy.sqrt((tau.T * K * tau)[0]) * (u.T * tau)[0]]),
            "interface",
        ),
    }
    rng = np.random.default_rng(seed)
    xs = rng.random(n)
    samples = {
        "fluid": np.column_stack([xs, 0.5 + 0.5 * rng.random(n)]),
        "porous": np.column_stack([xs, 0.5 * rng.random(n)]),
        "interface": np.column_stack([xs, np.full(n, 0.5)]),
    }
    report = {}
    for name, (ex, where) in conds.items():
        fn = _lambdify_array(list(ex))
        report[name] = float(np.abs(fn(samples[where])).max())
    for name, v in report.items():
        if not v <= tol:
            raise CaseViolation(name, v)
    return report


# -- case construction ----------------------------------------------------------

def _solve_coefficients(conditions, unknowns):
    """Solve interface conditions that must hold for every x on y = 1/2."""
    eqs = []
    for c in conditions:
        c = sy.expand(c.subs(Y, INTERFACE_Y))
        for xv in (sy.Rational(1, 7), sy.Rational(2, 7), sy.Rational(3, 7), sy.Rational(5, 7)):
            eqs.append(c.subs(X, xv))
    sol = sy.solve(eqs, unknowns, dict=True)
    if not sol:
        raise ValueError("interface conditions admit no solution for this ansatz")
    return sol[0]


def _interface_conditions(u_f, p, phi, nu, alpha, K):
    Gu = _sym_grad(sy.Matrix(u_f))
    D = (Gu + Gu.T) / 2
    u_p = -K * sy.Matrix([sy.diff(phi, X), sy.diff(phi, Y)])
    cd1 = -u_f[1] + u_p[1]
    cd2_lhs = p - 2 * nu * D[1, 1]  # n.D.n = D_yy for n = (0, -1)
    cd3 = 2 * nu * D[1, 0] - alpha / sy.sqrt(K[0, 0]) * u_f[0]
    return cd1, cd2_lhs, cd3


def _trig_poly_case(name, nu, alpha, K, rho_g, layer=None, description="",
                    stream=(sy.Rational(1, 10), 1, 1), head=None, pressure=(1, 0),
                    layer_amplitude=4):
    """u_f from the stream function sin(pi x) Y(y); phi = cos(pi x) Z(y).

    With s = y - 1/2, Y = a0 + a1 s + a2 s^2 + a3 s^3 where ``stream`` gives
    (a0, a1, a3); Z(1/2) = ``head``, by default 2 pi nu a1 / (rho g) so that
    p0 = 0; p = cos(pi x) (p0 + b1 s) + b2 s^2 with
    ``pressure`` = (b1, b2).  a2, p0 and the remaining head coefficients come
    from the interface conditions.  With ``layer = eps`` the head is
    Z = Z(1/2) + A eps exp(s/eps) + z2 s, A = ``layer_amplitude``.
    """
    nu, alpha, rho_g = map(sy.nsimplify, (nu, alpha, rho_g))
    K = sy.Matrix(K).applyfunc(sy.nsimplify)
    a0, a1, a3 = map(sy.nsimplify, stream)
    b1, b2 = map(sy.nsimplify, pressure)
    z0 = 2 * sy.pi * nu * a1 / rho_g if head is None else sy.nsimplify(head)
    s = Y - INTERFACE_Y
    a2, z1, z2, p0 = sy.symbols("a2 z1 z2 p0")
    Yf = a0 + a1 * s + a2 * s**2 + a3 * s**3
    psi = sy.sin(sy.pi * X) * Yf
    u_f = [sy.diff(psi, Y), -sy.diff(psi, X)]
    if layer is None:
        Z = z0 + z1 * s + z2 * s**2
    else:
        eps = sy.nsimplify(layer)
        amp = sy.nsimplify(layer_amplitude)
        Z = z0 + amp * eps * (sy.exp(s / eps) - 1) + z2 * s
    phi = sy.cos(sy.pi * X) * Z
    p = sy.cos(sy.pi * X) * (p0 + b1 * s) + b2 * s**2
    cd1, cd2_lhs, cd3 = _interface_conditions(u_f, p, phi, nu, alpha, K)
    conds = [cd1, cd2_lhs - rho_g * phi, cd3]
    if layer is None:
        # impermeable bottom: d phi / dy = 0 at y = 0
        conds.append(sy.diff(phi, Y).subs(Y, 0))
        unknowns = [a2, z1, z2, p0]
    else:
        unknowns = [a2, z2, p0]
    coef = _solve_coefficients(conds, unknowns)
    sub = lambda e: sy.simplify(e.subs(coef))  # noqa: E731
    return ManufacturedCase.from_expressions(
        name, nu, alpha, K, rho_g,
        [sub(c) for c in u_f], sub(p), sub(phi),
        lifted=True, smooth=layer is None, description=description,
        flags={"cd1": True, "cd2": True, "cd3": True, "homogeneous_boundary": False},
    )


def _linear_case():
    """Affine fields that the discrete spaces reproduce exactly."""
    nu, alpha, rho_g = 1, 1, 1
    K = sy.eye(2)
    a, d, p0, p1 = sy.symbols("a d p0 p1")
    c0, c1, c2, slope, p2 = sy.Rational(3, 10), sy.Rational(1, 2), sy.Rational(-2, 5), 1, 2
    u_f = [a + slope * Y, d]
    phi = c0 + c1 * X + c2 * Y
    p = p0 + p1 * X + p2 * Y
    cd1, cd2_lhs, cd3 = _interface_conditions(u_f, p, phi, nu, alpha, K)
    coef = _solve_coefficients([cd1, cd2_lhs - rho_g * phi, cd3], [a, d, p0, p1])
    return ManufacturedCase.from_expressions(
        "linear", nu, alpha, K, rho_g,
        [sy.sympify(c).subs(coef) for c in u_f], p.subs(coef), phi,
        lifted=True, smooth=True, in_discrete_space=True,
        description="affine fields contained in the discrete spaces",
        flags={"cd1": True, "cd2": True, "cd3": True, "homogeneous_boundary": False},
    )


def _zero_case():
    z = sy.Integer(0)
    return ManufacturedCase.from_expressions(
        "zero", 1, 1, sy.eye(2), 1, [z, z], z, z,
        smooth=True, in_discrete_space=True, description="all fields zero",
        flags={"cd1": True, "cd2": True, "cd3": True, "homogeneous_boundary": True},
    )


_BUILDERS = {
    "zero": _zero_case,
    "linear": _linear_case,
    "polynomial": lambda: _trig_poly_case(
        "polynomial", 1, 1, sy.eye(2), 1,
        description="trigonometric in x, polynomial in y, unit parameters",
    ),
    "anisotropic": lambda: _trig_poly_case(
        "anisotropic", sy.Rational(1, 2), sy.Rational(7, 10),
        sy.diag(2, sy.Rational(1, 2)), 2,
        description="trigonometric in x, polynomial in y, K = diag(2, 1/2)",
    ),
    "layer": lambda: _trig_poly_case(
        "layer", 1, 1, sy.eye(2), 1, layer=sy.Rational(1, 50),
        description="exponential head layer of width 1/50 below the interface",
    ),
}

_CACHE = {}


def case_names():
    return list(_BUILDERS)


def get_case(name):
    """Look up a shipped case by name (built once, then cached)."""
    if name not in _BUILDERS:
        raise KeyError(f"unknown case {name!r}; choose from {', '.join(_BUILDERS)}")
    if name not in _CACHE:
        _CACHE[name] = _BUILDERS[name]()
    return _CACHE[name]


def smooth_cases():
    """Names of shipped cases used for convergence-rate studies."""
    return [n for n in _BUILDERS if get_case(n).smooth and not get_case(n).in_discrete_space]


def discretize(case, mesh, params=None, delta=None, mass_trace="porous"):
    """Assemble the system for a case on a mesh with lifted boundary data."""
    params = case.params if params is None else params
    if delta is not None:
        params = dataclasses.replace(params, delta=delta)
    layout = build_dof_layout(mesh)
    return assemble_system(
        mesh, params, case.f_f, case.f_p, layout=layout,
        bc_values=case.boundary_values(layout), mean_target=case.pressure_integral(mesh),
        mass_trace=mass_trace,
    )


def solve_case(case, mesh, **kw):
    system = discretize(case, mesh, **kw)
    return system, solve(system)


def exact_error(sol, case, h_norm_degree=6):
    """||U - U_h||_h and its five squared contributions (delegates to the norm)."""
    return compute_h_norm(sol, AnalyticFields.from_case(case), degree=h_norm_degree)
