"""Residual a posteriori error indicators and the mesh-dependent norm.

Per fluid triangle K the squared indicator has four terms

    h_K^2 ||f_fh + 2 nu div D(u_fh) - grad p_h||_K^2,   ||div u_fh||_K^2,
    sum_{E in dK on Gamma} h_E ||2 nu n_f.D(u_fh).tau + alpha/sqrt(tau.K.tau) u_fh.tau||_E^2,
    sum_{E in dK on Gamma} h_E ||p_h - 2 nu n_f.D(u_fh).n_f - rho g phi_h||_E^2,

and per porous triangle five terms

    h_K^2 ||curl(rho g K^-1 u_ph + grad phi_h)||_K^2,   ||rho g (f_p - div u_ph)||_K^2,
    sum_{interior E} ||[rho g (K^-1 u_ph + grad phi_h) x n]_E||_E^2,
    sum_E h_E ||[rho g phi_h n]_E||_E^2,
    sum_{E on Gamma} (delta h_E / h) ||(u_fh - u_ph).n_f||_E^2.

Edge contributions are credited in full to every neighbour in the
relevant region.  In 2D, curl w = d1 w2 - d2 w1 and w x n = w1 n2 - w2 n1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import edge_points, map_to_physical, map_to_reference
from .mesh import BOUNDARY_POROUS, FLUID, INTERIOR_POROUS, POROUS
from .quadrature import make_quadrature

ELEMENT_DEGREE = 4
EDGE_DEGREE = 6
DATA_DEGREE = 10
N_TERMS = 5
FLUID_TERMS = ("element_residual", "divergence", "bjs_residual", "normal_stress_residual")
POROUS_TERMS = ("curl_residual", "mass_residual", "tangential_jump", "head_jump", "stabilization")


@dataclass(frozen=True)
class EstimatorOptions:
    """Switches for the estimator.

    scaled_tangential_jump
        Multiply the porous tangential-jump term by h_E.
    head_jump_boundary
        Add the one-sided traces rho g phi_h n on the boundary of the porous
        region (impermeable boundary and interface) to the head-jump term.
        They do not vanish for exact discrete solutions, so they are off by
        default.
    """

    scaled_tangential_jump: bool = False
    head_jump_boundary: bool = False
    data_degree: int = DATA_DEGREE


def _rule(mesh, tris, degree):
    rule = make_quadrature("triangle", degree)
    ref = rule.reference_points
    wdet = 2.0 * mesh.areas[tris][:, None] * rule.weights[None, :]
    return ref, wdet


def _edge_rule(degree):
    rule = make_quadrature("edge", degree)
    return rule.reference_points, rule.weights


def _edge_reference(mesh, edges, tris, s):
    x = edge_points(mesh, edges, s)
    return x, map_to_reference(mesh, tris, x)


def _velocity_gradient_bdm(sol, tris):
    """Constant physical gradients (n, 2, 2), [c, a] = d_a u_c, of the linear u_ph."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    v, _ = sol.u_p(tris, corners)
    dref = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # (n, c, b)
    return np.einsum("tcb,tba->tca", dref, sol.mesh.inverse_jacobians[tris])


def _strain(g):
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def _div_strain(hess):
    """div D(u) (..., 2) from Hessians (..., c, a, b) = d_a d_b u_c."""
    lap = np.einsum("...caa->...c", hess)
    grad_div = np.einsum("...aac->...c", hess)
    return 0.5 * (lap + grad_div)


# -- data projections -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DataProjection:
    """Piecewise constant mean of f_f and piecewise linear L2 projection of f_p.

    ``f_fh`` has shape (nt, 2) and is nonzero only on fluid triangles;
    ``f_ph`` holds barycentric nodal coefficients (nt, 3) on porous triangles.
    """

    mesh: object
    f_fh: np.ndarray
    f_ph: np.ndarray

    @classmethod
    def build(cls, mesh, f_f=None, f_p=None, degree=DATA_DEGREE):
        f_fh = np.zeros((mesh.nt, 2))
        f_ph = np.zeros((mesh.nt, 3))
        ref, wdet = _rule(mesh, np.arange(mesh.nt), degree)
        lam = np.column_stack([1 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
        fl = np.flatnonzero(mesh.region == FLUID)
        po = np.flatnonzero(mesh.region == POROUS)
        if f_f is not None and fl.size:
            x = map_to_physical(mesh, fl, ref)
            f_fh[fl] = np.einsum("tq,tqc->tc", wdet[fl], f_f(x)) / mesh.areas[fl][:, None]
        if f_p is not None and po.size:
            x = map_to_physical(mesh, po, ref)
            rhs = np.einsum("tq,tq,qi->ti", wdet[po], f_p(x), lam)
            # local P1 mass matrix |K|/12 [[2,1,1],[1,2,1],[1,1,2]]
            Minv = np.linalg.inv((np.ones((3, 3)) + np.eye(3)) / 12.0)
            f_ph[po] = rhs @ Minv.T / mesh.areas[po][:, None]
        return cls(mesh, f_fh, f_ph)

    def porous_values(self, tris, ref):
        lam = np.column_stack([1 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
        return self.f_ph[tris] @ lam.T


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Squared indicators per triangle with the per-term breakdown.

    ``terms`` has shape (nt, 5): fluid rows hold the four fluid terms (the
    fifth column is zero), porous rows the five porous terms.
    """

    mesh: object
    terms: np.ndarray
    zeta_sq: np.ndarray
    options: EstimatorOptions = EstimatorOptions()

    @property
    def region(self):
        return self.mesh.region

    @property
    def theta_sq(self):
        return self.terms.sum(axis=1)

    @property
    def theta_f_sq(self):
        return np.where(self.region == FLUID, self.theta_sq, 0.0)

    @property
    def theta_p_sq(self):
        return np.where(self.region == POROUS, self.theta_sq, 0.0)

    @property
    def theta(self):
        return float(np.sqrt(self.theta_sq.sum()))

    @property
    def zeta(self):
        return float(np.sqrt(self.zeta_sq.sum()))

    def term_totals(self):
        """Global sum of each term, keyed by region and term name."""
        out = {}
        for reg, names in ((FLUID, FLUID_TERMS), (POROUS, POROUS_TERMS)):
            mask = self.region == reg
            for j, name in enumerate(names):
                out[name] = float(self.terms[mask, j].sum())
        return out


# -- fluid indicator ------------------------------------------------------------

def compute_fluid_indicator(sol, mesh, params, proj, options=EstimatorOptions()):
    """(n_fluid, 4) squared terms per fluid triangle, ordered as ``layout.fluid_tris``."""
    tris = sol.layout.fluid_tris
    out = np.zeros((tris.size, 4))
    ref, wdet = _rule(mesh, tris, ELEMENT_DEGREE)
    _, g, hess = sol.u_f(tris, ref)
    _, gp = sol.p(tris, ref)
    r = proj.f_fh[tris][:, None, :] + 2.0 * params.nu * _div_strain(hess) - gp
    out[:, 0] = mesh.diameters[tris] ** 2 * np.einsum("tq,tqc->t", wdet, r**2)
    div = np.einsum("tqcc->tq", g)
    out[:, 1] = np.einsum("tq,tq->t", wdet, div**2)

    edges = mesh.interface_edges
    if edges.size:
        sides = mesh.interface_sides
        kf, kp = sides[:, 0], sides[:, 1]
        s, w = _edge_rule(EDGE_DEGREE)
        _, ref_f = _edge_reference(mesh, edges, kf, s)
        _, ref_p = _edge_reference(mesh, edges, kp, s)
        v, g, _ = sol.u_f(kf, ref_f)
        pv, _ = sol.p(kf, ref_f)
        phv, _ = sol.phi(kp, ref_p)
        n = mesh.edge_normals[edges]
        tau = mesh.edge_tangents[edges]
        D = _strain(g)
        nDt = np.einsum("ec,eqcd,ed->eq", n, D, tau)
        nDn = np.einsum("ec,eqcd,ed->eq", n, D, n)
        K = params.conductivity(mesh, kp)
        beta = params.alpha / np.sqrt(np.einsum("ec,ecd,ed->e", tau, K, tau))
        bjs = 2.0 * params.nu * nDt + beta[:, None] * np.einsum("eqc,ec->eq", v, tau)
        stress = pv - 2.0 * params.nu * nDn - params.rho_g * phv
        hE = mesh.edge_lengths[edges]
        local = sol.layout.fluid_tri_index[kf]
        np.add.at(out[:, 2], local, hE**2 * ((bjs**2) @ w))
        np.add.at(out[:, 3], local, hE**2 * ((stress**2) @ w))
    return out


# -- porous indicator -----------------------------------------------------------

def _porous_index(layout):
    idx = np.full(layout.mesh.nt, -1, dtype=np.int64)
    idx[layout.porous_tris] = np.arange(layout.porous_tris.size)
    return idx


def _darcy_residual(sol, params, Kinv, tris, ref):
    """rho g (K^-1 u_ph + grad phi_h) at per-element points (n, nq, 2)."""
    u, _ = sol.u_p(tris, ref)
    _, gphi = sol.phi(tris, ref)
    return params.rho_g * (np.einsum("tab,tqb->tqa", Kinv, u) + gphi)


def compute_porous_indicator(sol, mesh, params, proj, f_p=None, options=EstimatorOptions()):
    """(n_porous, 5) squared terms per porous triangle, ordered as ``layout.porous_tris``."""
    layout = sol.layout
    tris = layout.porous_tris
    out = np.zeros((tris.size, 5))
    pidx = _porous_index(layout)
    Kall = np.zeros((mesh.nt, 2, 2))
    Kall[tris] = np.linalg.inv(params.conductivity(mesh, tris))

    # curl of rho g K^-1 u_ph (grad phi_h is curl free elementwise)
    gu = _velocity_gradient_bdm(sol, tris)
    gw = params.rho_g * np.einsum("tab,tbc->tac", Kall[tris], gu)
    curl = gw[:, 1, 0] - gw[:, 0, 1]
    out[:, 0] = mesh.diameters[tris] ** 2 * mesh.areas[tris] * curl**2

    ref, wdet = _rule(mesh, tris, options.data_degree)
    _, div = sol.u_p(tris, ref[:1])
    fp = 0.0 if f_p is None else f_p(map_to_physical(mesh, tris, ref))
    out[:, 1] = np.einsum("tq,tq->t", wdet, (params.rho_g * (fp - div[:, None])) ** 2)

    s, w = _edge_rule(EDGE_DEGREE)

    # tangential jump over interior porous edges
    edges = mesh.edges_of_class(INTERIOR_POROUS)
    if edges.size:
        k1, k2 = mesh.edge_tris[edges, 0], mesh.edge_tris[edges, 1]
        _, r1 = _edge_reference(mesh, edges, k1, s)
        _, r2 = _edge_reference(mesh, edges, k2, s)
        jump = _darcy_residual(sol, params, Kall[k1], k1, r1) - _darcy_residual(
            sol, params, Kall[k2], k2, r2
        )
        n = mesh.edge_normals[edges]
        cross = jump[..., 0] * n[:, None, 1] - jump[..., 1] * n[:, None, 0]
        val = mesh.edge_lengths[edges] * ((cross**2) @ w)
        if options.scaled_tangential_jump:
            val = val * mesh.edge_lengths[edges]
        np.add.at(out[:, 2], pidx[k1], val)
        np.add.at(out[:, 2], pidx[k2], val)

        # head jump: phi_h is continuous, so this is round-off sized
        ph1, _ = sol.phi(k1, r1)
        ph2, _ = sol.phi(k2, r2)
        hj = params.rho_g * (ph1 - ph2)
        val = mesh.edge_lengths[edges] ** 2 * ((hj**2) @ w)
        np.add.at(out[:, 3], pidx[k1], val)
        np.add.at(out[:, 3], pidx[k2], val)

    if options.head_jump_boundary:
        bedges = np.concatenate([mesh.edges_of_class(BOUNDARY_POROUS), mesh.interface_edges])
        et = mesh.edge_tris[bedges]
        k = np.where(mesh.region[et[:, 0]] == POROUS, et[:, 0], et[:, 1])
        _, r = _edge_reference(mesh, bedges, k, s)
        ph, _ = sol.phi(k, r)
        val = mesh.edge_lengths[bedges] ** 2 * (((params.rho_g * ph) ** 2) @ w)
        np.add.at(out[:, 3], pidx[k], val)

    # interface stabilization
    edges = mesh.interface_edges
    if edges.size:
        sides = mesh.interface_sides
        kf, kp = sides[:, 0], sides[:, 1]
        _, ref_f = _edge_reference(mesh, edges, kf, s)
        _, ref_p = _edge_reference(mesh, edges, kp, s)
        vf, _, _ = sol.u_f(kf, ref_f)
        vp, _ = sol.u_p(kp, ref_p)
        n = mesh.edge_normals[edges]
        jn = np.einsum("eqc,ec->eq", vf - vp, n)
        hE = mesh.edge_lengths[edges]
        val = params.delta * hE / mesh.h * hE * ((jn**2) @ w)
        np.add.at(out[:, 4], pidx[kp], val)
    return out


def compute_oscillation(mesh, params, f_f=None, f_p=None, proj=None, degree=DATA_DEGREE):
    """Per-triangle squared oscillation zeta_K^2 and global zeta.

    Fluid: h_K^2 ||f_f - f_fh||_K^2.  Porous: (rho g)^2 ||f_p - f_ph||_K^2.
    """
    if proj is None:
        proj = DataProjection.build(mesh, f_f, f_p, degree)
    zeta_sq = np.zeros(mesh.nt)
    ref, wdet = _rule(mesh, np.arange(mesh.nt), degree)
    fl = np.flatnonzero(mesh.region == FLUID)
    po = np.flatnonzero(mesh.region == POROUS)
    if f_f is not None and fl.size:
        d = f_f(map_to_physical(mesh, fl, ref)) - proj.f_fh[fl][:, None, :]
        zeta_sq[fl] = mesh.diameters[fl] ** 2 * np.einsum("tq,tqc->t", wdet[fl], d**2)
    if f_p is not None and po.size:
        d = f_p(map_to_physical(mesh, po, ref)) - proj.porous_values(po, ref)
        zeta_sq[po] = params.rho_g**2 * np.einsum("tq,tq->t", wdet[po], d**2)
    return zeta_sq, float(np.sqrt(zeta_sq.sum()))


def estimate(sol, params, f_f=None, f_p=None, options=EstimatorOptions()):
    """All indicators and the oscillation for a discrete solution."""
    mesh = sol.mesh
    proj = DataProjection.build(mesh, f_f, f_p, options.data_degree)
    terms = np.zeros((mesh.nt, N_TERMS))
    terms[sol.layout.fluid_tris, :4] = compute_fluid_indicator(sol, mesh, params, proj, options)
    terms[sol.layout.porous_tris] = compute_porous_indicator(
        sol, mesh, params, proj, f_p, options
    )
    zeta_sq, _ = compute_oscillation(mesh, params, f_f, f_p, proj, options.data_degree)
    return IndicatorField(mesh, terms, zeta_sq, options)


# -- mesh-dependent norm --------------------------------------------------------

@dataclass(frozen=True)
class AnalyticFields:
    """Closed-form operand for :func:`compute_h_norm`; callables take points (..., 2).

    ``grad_u_f`` returns (..., 2, 2) with [c, a] = d_a u_c.
    """

    u_f: object
    grad_u_f: object
    p: object
    u_p: object
    div_u_p: object
    phi: object

    @classmethod
    def from_case(cls, case):
        return cls(case.u_f, case.grad_u_f_matrix, case.p, case.u_p, case.div_u_p, case.phi)


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class HNorm:
    """Squared contributions of the mesh-dependent norm and the total."""

    u_f: float
    p: float
    u_p: float
    phi: float
    interface: float

    @property
    def contributions(self):
        return {"u_f": self.u_f, "p": self.p, "u_p": self.u_p, "phi": self.phi,
                "interface": self.interface}

    @property
    def total(self):
        return float(np.sqrt(sum(self.contributions.values())))


def _sample_cells(op, mesh, tris, ref, field):
    """Values and derivatives of one field at per-element reference points."""
    if op is None:
        return None
    if isinstance(op, AnalyticFields):
        x = map_to_physical(mesh, tris, np.broadcast_to(ref, (len(tris),) + np.shape(ref)[-2:]))
        if field == "u_f":
            return op.u_f(x), op.grad_u_f(x)
        if field == "u_p":
            return op.u_p(x), op.div_u_p(x)
        return getattr(op, field)(x), None
    if field == "u_f":
        v, g, _ = op.u_f(tris, ref)
        return v, g
    if field == "u_p":
        v, div = op.u_p(tris, ref)
        return v, np.broadcast_to(div[:, None], v.shape[:2])
    return getattr(op, field)(tris, ref)[0], None


def _diff(a, b):
    if a is None and b is None:
        return None
    if a is None:
        return -b
    if b is None:
        return a
    return a - b


def compute_h_norm(a, b=None, mesh=None, degree=8):
    """||a - b||_h for discrete solutions or :class:`AnalyticFields` (``None`` is zero).

    The interface term is h^-1 ||(v_f - v_p).n_f||_Gamma^2 with the global h.
    """
    meshes = [op.mesh for op in (a, b) if op is not None and not isinstance(op, AnalyticFields)]
    if mesh is None:
        if not meshes:
            raise ValueError("a mesh is required when neither operand is discrete")
        mesh = meshes[0]
    if any(m is not mesh for m in meshes):
        raise MeshMismatchError("operands live on different meshes")
    rule = make_quadrature("triangle", degree)
    ref = rule.reference_points
    fl = np.flatnonzero(mesh.region == FLUID)
    po = np.flatnonzero(mesh.region == POROUS)
    wf = 2.0 * mesh.areas[fl][:, None] * rule.weights
    wp = 2.0 * mesh.areas[po][:, None] * rule.weights

    def cell_diff(tris, field):
        sa = _sample_cells(a, mesh, tris, ref, field)
        sb = _sample_cells(b, mesh, tris, ref, field)
        v = _diff(None if sa is None else sa[0], None if sb is None else sb[0])
        d = _diff(None if sa is None else sa[1], None if sb is None else sb[1])
        return v, d

    def integral(w, v):
        if v is None:
            return 0.0
        v = v.reshape(v.shape[:2] + (-1,))
        return float(np.einsum("tq,tqk->", w, v**2))

    v, g = cell_diff(fl, "u_f")
    uf = integral(wf, v) + integral(wf, g)
    p = integral(wf, cell_diff(fl, "p")[0])
    v, d = cell_diff(po, "u_p")
    up = integral(wp, v) + integral(wp, d)
    phi = integral(wp, cell_diff(po, "phi")[0])

    gam = 0.0
    edges = mesh.interface_edges
    if edges.size and (a is not None or b is not None):
        s, w = _edge_rule(degree)
        sides = mesh.interface_sides
        kf, kp = sides[:, 0], sides[:, 1]
        x, ref_f = _edge_reference(mesh, edges, kf, s)
        _, ref_p = _edge_reference(mesh, edges, kp, s)

        def trace(op):
            if op is None:
                return 0.0
            if isinstance(op, AnalyticFields):
                return op.u_f(x) - op.u_p(x)
            return op.u_f(kf, ref_f)[0] - op.u_p(kp, ref_p)[0]

        jn = np.einsum("eqc,ec->eq", trace(a) - trace(b), mesh.edge_normals[edges])
        gam = float((mesh.edge_lengths[edges] * ((jn**2) @ w)).sum() / mesh.h)
    return HNorm(uf, p, up, phi, gam)
