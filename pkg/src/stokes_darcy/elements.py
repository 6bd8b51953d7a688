"""Reference bases for P1, the MINI bubble enrichment and BDM1.

Reference triangle vertices are (0,0), (1,0), (0,1), with barycentric
coordinates l0 = 1 - xi - eta, l1 = xi, l2 = eta.  Physical quantities are
obtained with the affine map x = x0 + B xi (scalar fields) and the
contravariant Piola map v = B v_hat / det B (BDM1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .quadrature import make_quadrature

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# reference gradients of l0, l1, l2
REF_P1_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# local edge i runs counter-clockwise from vertex i+1 to vertex i+2
_REF_EDGE_START = REF_VERTICES[[1, 2, 0]]
_REF_EDGE_END = REF_VERTICES[[2, 0, 1]]
_REF_EDGE_LEN = np.linalg.norm(_REF_EDGE_END - _REF_EDGE_START, axis=1)
_t = (_REF_EDGE_END - _REF_EDGE_START) / _REF_EDGE_LEN[:, None]
REF_EDGE_NORMALS = np.column_stack([_t[:, 1], -_t[:, 0]])  # outward for CCW


def legendre_moment_weights(s):
    """Shifted Legendre polynomials 1 and 2s - 1 on [0, 1]; shape (..., 2)."""
    s = np.asarray(s, dtype=float)
    return np.stack([np.ones_like(s), 2.0 * s - 1.0], axis=-1)


class BasisTable(NamedTuple):
    values: np.ndarray
    derivatives: np.ndarray
    hessians: np.ndarray | None = None


@dataclass(frozen=True)
class ReferenceBasis:
    """A reference-element basis family: ``P1``, ``P1-bubble`` or ``BDM1``."""

    family: str

    def __post_init__(self):
        if self.family not in ("P1", "P1-bubble", "BDM1"):
            raise ValueError(f"unknown basis family {self.family!r}")

    @property
    def size(self):
        return {"P1": 3, "P1-bubble": 4, "BDM1": 6}[self.family]


P1 = ReferenceBasis("P1")
P1_BUBBLE = ReferenceBasis("P1-bubble")
BDM1 = ReferenceBasis("BDM1")


def _check_points(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 2:
        raise ValueError("reference points must have shape (nq, 2)")
    lam0 = 1.0 - pts[:, 0] - pts[:, 1]
    if np.any(pts < -1e-12) or np.any(lam0 < -1e-12):
        raise ValueError("reference point outside the reference triangle")
    return pts


def _bdm_monomials(pts):
    """Values (nq, 6, 2) of the monomial basis of linear vector fields."""
    xi, eta = pts[:, 0], pts[:, 1]
    one, zero = np.ones_like(xi), np.zeros_like(xi)
    comps = [(one, zero), (xi, zero), (eta, zero), (zero, one), (zero, xi), (zero, eta)]
    return np.stack([np.stack(c, axis=-1) for c in comps], axis=1)


_BDM_MONO_DIV = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 1.0])


def _bdm_coefficients():
    rule = make_quadrature("edge", 4)
    s = rule.reference_points
    V = np.zeros((6, 6))
    for i in range(3):
        x = _REF_EDGE_START[i] + s[:, None] * (_REF_EDGE_END[i] - _REF_EDGE_START[i])
        flux = _bdm_monomials(x) @ REF_EDGE_NORMALS[i]  # (nq, 6)
        L = legendre_moment_weights(s)  # (nq, 2)
        for k in range(2):
            V[2 * i + k] = _REF_EDGE_LEN[i] * np.einsum("q,q,qm->m", rule.weights, L[:, k], flux)
    return np.linalg.inv(V)  # columns are basis functions in monomial coordinates


_BDM_COEF = _bdm_coefficients()


def eval_basis(basis, points):
    """Tabulate a reference basis at reference points.

    Returns a :class:`BasisTable`:

    * ``P1``: values (nq, 3), gradients (nq, 3, 2), zero Hessians
    * ``P1-bubble``: the three P1 functions then the bubble 27 l0 l1 l2;
      values (nq, 4), gradients (nq, 4, 2), Hessians (nq, 4, 2, 2)
    * ``BDM1``: values (nq, 6, 2) in the reference frame, divergence (nq, 6).
      Basis 2*i + k is dual to the k-th Legendre moment of v.n on local edge i.
    """
    if isinstance(basis, str):
        basis = ReferenceBasis(basis)
    pts = _check_points(points)
    nq = pts.shape[0]
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    if basis.family == "BDM1":
        vals = np.einsum("qmc,mj->qjc", _bdm_monomials(pts), _BDM_COEF)
        div = np.broadcast_to(_BDM_MONO_DIV @ _BDM_COEF, (nq, 6)).copy()
        return BasisTable(vals, div)
    grads = np.broadcast_to(REF_P1_GRADS, (nq, 3, 2))
    hess = np.zeros((nq, 3, 2, 2))
    if basis.family == "P1":
        return BasisTable(lam, grads.copy(), hess)
    l0, l1, l2 = lam.T
    g0, g1, g2 = REF_P1_GRADS
    b = 27.0 * l0 * l1 * l2
    gb = 27.0 * (
        (l1 * l2)[:, None] * g0 + (l0 * l2)[:, None] * g1 + (l0 * l1)[:, None] * g2
    )
    hb = 27.0 * (
        l2[:, None, None] * (np.outer(g0, g1) + np.outer(g1, g0))
        + l1[:, None, None] * (np.outer(g0, g2) + np.outer(g2, g0))
        + l0[:, None, None] * (np.outer(g1, g2) + np.outer(g2, g1))
    )
    values = np.column_stack([lam, b])
    derivs = np.concatenate([grads, gb[:, None, :]], axis=1)
    hessians = np.concatenate([hess, hb[:, None]], axis=1)
    return BasisTable(values, derivs, hessians)


# -- physical mappings ------------------------------------------------------

def map_to_physical(mesh, tris, ref_pts):
    """Physical points (n, nq, 2) of reference points (nq, 2) or (n, nq, 2)."""
    x0 = mesh.vertices[mesh.triangles[tris, 0]]
    B = mesh.jacobians[tris]
    ref = np.broadcast_to(ref_pts, (len(tris),) + np.shape(ref_pts)[-2:])
    return x0[:, None, :] + np.einsum("tab,tqb->tqa", B, ref)


def map_to_reference(mesh, tris, x):
    """Reference coordinates (n, nq, 2) of physical points x (n, nq, 2)."""
    x0 = mesh.vertices[mesh.triangles[tris, 0]]
    Binv = mesh.inverse_jacobians[tris]
    return np.einsum("tab,tqb->tqa", Binv, x - x0[:, None, :])


def p1_gradients(mesh, tris):
    """Constant physical P1 gradients (n, 3, 2)."""
    return np.einsum("ia,tab->tib", REF_P1_GRADS, mesh.inverse_jacobians[tris])


def _flat_eval(basis, ref):
    n, nq = ref.shape[:2]
    tab = eval_basis(basis, np.clip(ref.reshape(-1, 2), 0.0, 1.0))
    return tab, n, nq


def scalar_tables(mesh, tris, ref, bubble=True):
    """Physical P1(+bubble) values, gradients and Hessians at per-element points.

    ref : (n, nq, 2) reference points (or (nq, 2), broadcast).
    Returns values (n, nq, nb), gradients (n, nq, nb, 2), Hessians (n, nq, nb, 2, 2).
    """
    ref = np.broadcast_to(ref, (len(tris),) + np.shape(ref)[-2:])
    tab, n, nq = _flat_eval(P1_BUBBLE if bubble else P1, ref)
    nb = tab.values.shape[1]
    Binv = mesh.inverse_jacobians[tris]
    vals = tab.values.reshape(n, nq, nb)
    g = tab.derivatives.reshape(n, nq, nb, 2)
    h = tab.hessians.reshape(n, nq, nb, 2, 2)
    grads = np.einsum("tqia,tab->tqib", g, Binv)
    hess = np.einsum("tac,tqiab,tbd->tqicd", Binv, h, Binv)
    return vals, grads, hess


def bdm_signs(mesh, tris):
    """(n, 6) factor turning global BDM1 coefficients into local ones."""
    sn = mesh.outward_sign[tris].astype(float)
    sd = mesh.direction_sign[tris].astype(float)
    return np.stack([sn, sn * sd], axis=2).reshape(len(tris), 6)


def bdm_tables(mesh, tris, ref):
    """Piola-mapped BDM1 values (n, nq, 6, 2) and divergences (n, 6).

    Signs for the global edge orientation are already applied, so the
    field is ``sum_j coef[global_dof_j] * values[..., j, :]``.
    """
    ref = np.broadcast_to(ref, (len(tris),) + np.shape(ref)[-2:])
    tab, n, nq = _flat_eval(BDM1, ref)
    B = mesh.jacobians[tris]
    det = mesh.areas[tris] * 2.0
    sign = bdm_signs(mesh, tris)
    vhat = tab.values.reshape(n, nq, 6, 2)
    vals = np.einsum("tab,tqjb->tqja", B, vhat) / det[:, None, None, None]
    vals *= sign[:, None, :, None]
    div = tab.derivatives.reshape(n, nq, 6)[:, 0, :] / det[:, None] * sign
    return vals, div


def edge_points(mesh, edges, s):
    """Physical points (n, nq, 2) at parameters s in [0, 1], lower vertex at s=0."""
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    return a[:, None, :] + np.asarray(s)[None, :, None] * (b - a)[:, None, :]
