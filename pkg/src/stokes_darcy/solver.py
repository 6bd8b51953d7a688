"""Sparse direct solution of the coupled system and discrete field evaluation.

The operator maps (p, phi) = (c, c / (rho g)) to zero for every constant c,
so the pressure level is fixed by a bordered row: the fluid-region integral
of p_h is set to ``CoupledSystem.mean_target``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import bdm_tables, edge_points, legendre_moment_weights, scalar_tables
from .mesh import FLUID, POROUS
from .quadrature import make_quadrature

FIELDS = ("u_f", "p", "u_p", "phi")
FIELD_REGION = {"u_f": FLUID, "p": FLUID, "u_p": POROUS, "phi": POROUS}
SVD_DIAGNOSIS_LIMIT = 3000


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """The factorization met a zero pivot; ``block`` names the unknown block involved."""

    def __init__(self, message, block=None, dof=None):
        super().__init__(message)
        self.block = block
        self.dof = dof


class FieldRegionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Coefficients of (u_fh, p_h, u_ph, phi_h) on a dof layout.

    ``multiplier`` is the Lagrange multiplier of the pressure-level row and
    ``residual`` the relative algebraic residual of the solved system.
    """

    coefficients: np.ndarray
    layout: object
    multiplier: float = 0.0
    residual: float = 0.0

    @property
    def mesh(self):
        return self.layout.mesh

    def block(self, name):
        return self.coefficients[self.layout.block_slice(name)]

    # -- vectorized evaluation on lists of triangles ------------------------

    def _check(self, field, tris):
        region = self.mesh.region[np.asarray(tris)]
        if np.any(region != FIELD_REGION[field]):
            raise FieldRegionError(f"field {field!r} is not defined on the requested elements")

    def u_f(self, tris, ref):
        """Values (n, nq, 2), gradients (n, nq, 2, 2) with [c, a] = d_a u_c,
        and Hessians (n, nq, 2, 2, 2)."""
        self._check("u_f", tris)
        vals, grads, hess = scalar_tables(self.mesh, tris, ref)
        c = self.coefficients[self.layout.uf_dofs(tris)].reshape(len(tris), 2, 4)
        v = np.einsum("tci,tqi->tqc", c, vals)
        g = np.einsum("tci,tqia->tqca", c, grads)
        h = np.einsum("tci,tqiab->tqcab", c, hess)
        return v, g, h

    def p(self, tris, ref):
        """Values (n, nq) and constant gradients (n, nq, 2)."""
        self._check("p", tris)
        vals, grads, _ = scalar_tables(self.mesh, tris, ref, bubble=False)
        c = self.coefficients[self.layout.p_dofs(tris)]
        return np.einsum("ti,tqi->tq", c, vals), np.einsum("ti,tqia->tqa", c, grads)

    def u_p(self, tris, ref):
        """Values (n, nq, 2) and constant divergence (n,)."""
        self._check("u_p", tris)
        vals, div = bdm_tables(self.mesh, tris, ref)
        c = self.coefficients[self.layout.up_dofs(tris)]
        return np.einsum("tj,tqja->tqa", c, vals), np.einsum("tj,tj->t", c, div)

    def phi(self, tris, ref):
        self._check("phi", tris)
        vals, grads, _ = scalar_tables(self.mesh, tris, ref, bubble=False)
        c = self.coefficients[self.layout.phi_dofs(tris)]
        return np.einsum("ti,tqi->tq", c, vals), np.einsum("ti,tqia->tqa", c, grads)


def evaluate_field(sol, field, element, point):
    """Value of one field on one element at one reference point.

    Returns ``(value, derivative)`` where the derivative is the gradient for
    scalar fields, the velocity gradient for u_f and the divergence for u_p.
    """
    if field not in FIELDS:
        raise ValueError(f"unknown field {field!r}")
    tris = np.array([int(element)])
    ref = np.asarray(point, dtype=float).reshape(1, 1, 2)
    out = getattr(sol, field)(tris, ref)
    if field == "u_p":
        return out[0][0, 0], out[1][0]
    return out[0][0, 0], out[1][0, 0]


# -- interpolation ------------------------------------------------------------

def interpolate(layout, u_f=None, p=None, u_p=None, phi=None, edge_degree=9):
    """Canonical interpolant coefficients of analytic fields.

    Nodal values for the Lagrange fields (zero bubble coefficients) and the
    two Legendre moments of u.n on every porous edge for BDM1.  Callables
    take points (..., 2).
    """
    mesh = layout.mesh
    x = np.zeros(layout.ndof)
    nvf = layout.fluid_vertices.size
    if u_f is not None:
        val = np.asarray(u_f(mesh.vertices[layout.fluid_vertices]))
        s = layout.block_slice("u_f")
        x[s.start:s.start + nvf] = val[:, 0]
        x[s.start + nvf:s.start + 2 * nvf] = val[:, 1]
    if p is not None:
        x[layout.block_slice("p")] = p(mesh.vertices[layout.fluid_vertices])
    if phi is not None:
        x[layout.block_slice("phi")] = phi(mesh.vertices[layout.porous_vertices])
    if u_p is not None:
        x[layout.block_slice("u_p")] = edge_moments(mesh, layout.porous_edges, u_p, edge_degree).ravel()
    return x


def edge_moments(mesh, edges, field, degree=9):
    """(n, 2) Legendre moments of field.n_E along edges (s = 0 at the lower vertex)."""
    rule = make_quadrature("edge", degree)
    s = rule.reference_points
    xq = edge_points(mesh, edges, s)
    flux = np.einsum("eqa,ea->eq", np.asarray(field(xq)), mesh.edge_normals[edges])
    L = legendre_moment_weights(s)
    return mesh.edge_lengths[edges][:, None] * np.einsum("q,eq,qk->ek", rule.weights, flux, L)


# -- solve --------------------------------------------------------------------

def _bordered(system):
    layout = system.layout
    free = layout.free
    cons = layout.constrained
    A = system.matrix.tocsr()
    g = system.bc_values
    Aff = A[free][:, free]
    b = system.rhs[free] - A[free][:, cons] @ g[cons]
    d = system.mean_row[free]
    target = system.mean_target - system.mean_row[cons] @ g[cons]
    col = sp.csr_matrix(d[:, None])
    M = sp.bmat([[Aff, col], [col.T, None]], format="csc")
    rhs = np.append(b, target)
    return M, rhs, free


def _diagnose(M, free, layout, lu=None):
    """Locate the dof most involved in the singular direction."""
    n = M.shape[0]
    if n <= SVD_DIAGNOSIS_LIMIT:
        _, s, vt = scipy.linalg.svd(M.toarray())
        k = int(np.argmax(np.abs(vt[-1])))
    elif lu is not None:
        diag = np.abs(lu.U.diagonal())
        k = int(lu.perm_c[np.argmin(diag)])
    else:
        return None, None
    if k == n - 1:
        return "pressure-level", None
    dof = int(free[k])
    return layout.block_of(dof), dof


def solve(system, rtol=1e-10, pivot_tol=1e-13):
    """Factor and solve; raise :class:`SingularSystemError` on a zero pivot."""
    M, rhs, free = _bordered(system)
    layout = system.layout
    try:
        lu = spla.splu(M)
    except RuntimeError as exc:
        block, dof = _diagnose(M, free, layout)
        raise SingularSystemError(
            f"matrix is singular ({exc}); zero pivot in block {block!r}", block, dof
        ) from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() <= pivot_tol * diag.max():
        block, dof = _diagnose(M, free, layout, lu)
        raise SingularSystemError(
            f"matrix is numerically singular (pivot ratio {diag.min() / diag.max():.2e}); "
            f"zero pivot in block {block!r}",
            block,
            dof,
        )
    y = lu.solve(rhs)
    r = rhs - M @ y
    # one step of iterative refinement
    y += lu.solve(r)
    r = rhs - M @ y
    scale = np.abs(rhs).max()
    res = float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(M @ y).max())
    if scale > 0 and res > rtol or scale == 0 and res > 1e-12:
        raise SolverError(f"relative residual {res:.2e} exceeds tolerance {rtol:.0e}")
    x = system.bc_values.copy()
    x[free] = y[:-1]
    return DiscreteSolution(x, layout, float(y[-1]), res)
