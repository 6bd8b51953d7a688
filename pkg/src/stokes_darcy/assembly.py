"""Assembly of the stabilized coupled Stokes-Darcy system.

The discrete problem reads L(U, V) + J(U, V) = F(V) with

    L(U, V) = a_f(u_f, v_f) - b_f(v_f, p) + b_f(u_f, q)
            + a_p(u_p, v_p) - b_p(v_p, phi) + b_p(u_p, psi)
            + c(v_f - v_p, phi)
    J(U, V) = delta/h <(u_f - u_p).n_f, (v_f - v_p).n_f>_Gamma
    F(V)    = (f_f, v_f) + rho g (f_p, psi)

Rows of the matrix are test functions, columns trial functions.

With a continuous P1 head and a piecewise constant div u_p, the pairing
rho g (div u_p, psi) only sees elementwise means of psi, so on its own it
leaves three-colourable head modes undetermined and does not control
div u_ph.  The Darcy block therefore also carries two consistent terms,
both vanishing for the exact solution:

    kappa rho g (div u_p - f_p, div v_p)
    gamma rho g (K (K^-1 u_p + grad phi), K^-1 v_p + grad psi)

with kappa = ``PhysicalParams.div_penalty`` and gamma =
``PhysicalParams.darcy_penalty``; zero values recover the plain form.

``mass_trace="fluid"`` optionally adds -rho g <(u_f - u_p).n_f, psi>_Gamma
to the head rows, which makes the interface coupling skew-symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dofs import build_dof_layout
from .elements import (
    bdm_tables,
    edge_points,
    map_to_physical,
    map_to_reference,
    p1_gradients,
    scalar_tables,
)
from .quadrature import make_quadrature

TRIANGLE_DEGREE = 4
EDGE_DEGREE = 4
LOAD_DEGREE = 6


@dataclass(frozen=True)
class PhysicalParams:
    """Material and stabilization parameters.

    ``K`` is a constant SPD 2x2 tensor or a callable returning (..., 2, 2)
    tensors at points; it is sampled at triangle centroids.
    """

    nu: float = 1.0
    rho: float = 1.0
    g: float = 1.0
    alpha: float = 1.0
    K: object = field(default_factory=lambda: np.eye(2))
    delta: float = 1.0
    div_penalty: float = 1.0
    darcy_penalty: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.rho * self.g > 0:
            raise ValueError(f"rho*g must be positive, got {self.rho * self.g}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.div_penalty >= 0:
            raise ValueError(f"div_penalty must be non-negative, got {self.div_penalty}")
        if not self.darcy_penalty >= 0:
            raise ValueError(f"darcy_penalty must be non-negative, got {self.darcy_penalty}")
        if not callable(self.K):
            K = np.asarray(self.K, dtype=float)
            if K.shape != (2, 2):
                raise ValueError("constant K must be a 2x2 tensor")
            _check_spd(K[None])

    @property
    def rho_g(self):
        return self.rho * self.g

    def conductivity(self, mesh, tris):
        """(n, 2, 2) tensor per triangle, validated SPD."""
        if callable(self.K):
            K = np.asarray(self.K(mesh.centroids[tris]), dtype=float)
            K = np.broadcast_to(K, (len(tris), 2, 2)).copy()
            _check_spd(K)
            return K
        return np.broadcast_to(np.asarray(self.K, dtype=float), (len(tris), 2, 2)).copy()


def _check_spd(K):
    if not np.allclose(K, np.swapaxes(K, 1, 2), rtol=1e-12, atol=1e-14):
        raise ValueError("conductivity tensor K must be symmetric")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise ValueError("conductivity tensor K must be positive definite")


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """Matrix and load over all dofs, with the data needed to solve.

    ``bc_values`` holds the prescribed values of constrained dofs (zero for
    homogeneous conditions).  ``mean_row`` integrates the pressure over the
    fluid region; the solver fixes ``mean_row @ x = mean_target``.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    layout: object
    params: PhysicalParams
    bc_values: np.ndarray
    mean_row: np.ndarray
    mean_target: float = 0.0

    @property
    def mesh(self):
        return self.layout.mesh

    @property
    def block_ranges(self):
        return {name: self.layout.block_slice(name) for name in ("u_f", "p", "u_p", "phi")}


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, local):
        """Scatter local blocks (n, a, b) at rows (n, a) x cols (n, b)."""
        r = np.broadcast_to(rows[:, :, None], local.shape)
        c = np.broadcast_to(cols[:, None, :], local.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(local.ravel())

    def to_csr(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        A = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n, n),
        )
        return A.tocsr()


def _tri_rule(mesh, tris, degree):
    rule = make_quadrature("triangle", degree)
    ref = rule.reference_points
    wdet = 2.0 * mesh.areas[tris][:, None] * rule.weights[None, :]
    return ref, wdet


def interface_traces(mesh, layout, degree=EDGE_DEGREE):
    """Quadrature data on the interface edges.

    Returns a dict with edge ids, weights times length (n, nq), physical
    points, the normal n_f and tangent, fluid scalar basis values (n, nq, 4)
    on the fluid side and Piola BDM1 values (n, nq, 6, 2) on the porous side,
    and porous P1 values (n, nq, 3).
    """
    rule = make_quadrature("edge", degree)
    s = rule.reference_points
    gam = mesh.interface_edges
    kf, kp = mesh.interface_sides[:, 0], mesh.interface_sides[:, 1]
    x = edge_points(mesh, gam, s)
    ref_f = map_to_reference(mesh, kf, x)
    ref_p = map_to_reference(mesh, kp, x)
    phi_f, grad_f, hess_f = scalar_tables(mesh, kf, ref_f)
    phi_p, grad_p, _ = scalar_tables(mesh, kp, ref_p, bubble=False)
    bdm, _ = bdm_tables(mesh, kp, ref_p)
    return {
        "edges": gam,
        "fluid": kf,
        "porous": kp,
        "x": x,
        "wlen": mesh.edge_lengths[gam][:, None] * rule.weights[None, :],
        "normal": mesh.edge_normals[gam],
        "tangent": mesh.edge_tangents[gam],
        "fluid_values": phi_f,
        "fluid_grads": grad_f,
        "fluid_hess": hess_f,
        "porous_p1": phi_p,
        "porous_p1_grads": grad_p,
        "porous_bdm": bdm,
    }


def _vector_trace(scalar_vals, direction):
    """Component-major (n, nq, 8) traces of e_c psi_i dotted with direction (n, 2)."""
    return np.concatenate(
        [scalar_vals * direction[:, None, 0:1], scalar_vals * direction[:, None, 1:2]], axis=2
    )


def assemble_stokes_block(mesh, layout, params, out=None):
    """a_f (volume and BJS slip) and the two b_f blocks."""
    trip = _Triplets() if out is None else out
    tris = layout.fluid_tris
    if tris.size == 0:
        raise ValueError("mesh has no fluid triangles")
    ref, wdet = _tri_rule(mesh, tris, TRIANGLE_DEGREE)
    vals, grads, _ = scalar_tables(mesh, tris, ref)
    uf = layout.uf_dofs(tris)
    trip.add(uf, uf, 2.0 * params.nu * _kernels.sym_grad_stiffness(grads, wdet))

    # b_f(v, q) = (q, div v): div(e_c psi_j) = d_c psi_j
    divs = np.concatenate([grads[..., 0], grads[..., 1]], axis=2)  # (n, nq, 8)
    Bloc = np.einsum("tq,tqi,tqj->tij", wdet, vals[..., :3], divs)
    pd = layout.p_dofs(tris)
    trip.add(pd, uf, Bloc)
    trip.add(uf, pd, -np.swapaxes(Bloc, 1, 2))

    if mesh.interface_edges.size:
        tr = interface_traces(mesh, layout)
        Kp = params.conductivity(mesh, tr["porous"])
        tau = tr["tangent"]
        coef = params.alpha / np.sqrt(np.einsum("ea,eab,eb->e", tau, Kp, tau))
        t = _vector_trace(tr["fluid_values"], tau)
        loc = coef[:, None, None] * np.einsum("eq,eqi,eqj->eij", tr["wlen"], t, t)
        ufg = layout.uf_dofs(tr["fluid"])
        trip.add(ufg, ufg, loc)
    return trip


def assemble_darcy_block(mesh, layout, params, out=None):
    """a_p (K^-1 weighted BDM1 mass), the two b_p blocks and the Darcy stabilization."""
    trip = _Triplets() if out is None else out
    tris = layout.porous_tris
    if tris.size == 0:
        raise ValueError("mesh has no porous triangles")
    ref, wdet = _tri_rule(mesh, tris, TRIANGLE_DEGREE)
    vals, div = bdm_tables(mesh, tris, ref)
    K = params.conductivity(mesh, tris)
    Kinv = np.linalg.inv(K)
    up = layout.up_dofs(tris)
    gamma = params.darcy_penalty
    mass_w = (1.0 + gamma) * params.rho_g * Kinv
    trip.add(up, up, _kernels.weighted_vector_mass(vals, mass_w, wdet))

    # b_p(v, psi) = rho g (psi, div v); P1 integrates to |K|/3
    Bloc = params.rho_g * (mesh.areas[tris] / 3.0)[:, None, None] * np.broadcast_to(
        div[:, None, :], (tris.size, 3, 6)
    )
    ph = layout.phi_dofs(tris)
    trip.add(ph, up, Bloc)
    trip.add(up, ph, -np.swapaxes(Bloc, 1, 2))
    if params.div_penalty > 0:
        scale = params.div_penalty * params.rho_g * mesh.areas[tris]
        trip.add(up, up, scale[:, None, None] * div[:, :, None] * div[:, None, :])
    if gamma > 0:
        grads = p1_gradients(mesh, tris)
        vint = np.einsum("tq,tqja->tja", wdet, vals)
        G = gamma * params.rho_g * np.einsum("tja,tia->tji", vint, grads)
        trip.add(up, ph, G)
        trip.add(ph, up, np.swapaxes(G, 1, 2))
        S = gamma * params.rho_g * mesh.areas[tris][:, None, None] * np.einsum(
            "tia,tab,tjb->tij", grads, K, grads
        )
        trip.add(ph, ph, S)
    return trip


MASS_TRACES = ("fluid", "porous")


def assemble_interface_coupling(mesh, layout, params, out=None, mass_trace="porous"):
    """c(v_f - v_p, phi) in the velocity test rows, the J penalty and,
    for ``mass_trace="fluid"``, the head-row correction."""
    if mass_trace not in MASS_TRACES:
        raise ValueError(f"mass_trace must be one of {MASS_TRACES}, got {mass_trace!r}")
    trip = _Triplets() if out is None else out
    if mesh.interface_edges.size == 0:
        raise ValueError("mesh has no interface edges")
    tr = interface_traces(mesh, layout)
    n = tr["normal"]
    w = tr["wlen"]
    tf = _vector_trace(tr["fluid_values"], n)  # (e, q, 8) v_f.n_f
    tp = np.einsum("eqja,ea->eqj", tr["porous_bdm"], n)  # (e, q, 6) v_p.n_f
    phi = tr["porous_p1"]  # (e, q, 3)
    ufg = layout.uf_dofs(tr["fluid"])
    upg = layout.up_dofs(tr["porous"])
    phg = layout.phi_dofs(tr["porous"])

    rg = params.rho_g
    trip.add(ufg, phg, rg * np.einsum("eq,eqi,eqj->eij", w, tf, phi))
    trip.add(upg, phg, -rg * np.einsum("eq,eqi,eqj->eij", w, tp, phi))

    jump = np.concatenate([tf, -tp], axis=2)  # (e, q, 14)
    dofs = np.concatenate([ufg, upg], axis=1)
    pen = params.delta / mesh.h
    trip.add(dofs, dofs, pen * np.einsum("eq,eqi,eqj->eij", w, jump, jump))
    if mass_trace == "fluid":
        trip.add(phg, dofs, -rg * np.einsum("eq,eqi,eqj->eij", w, phi, jump))
    return trip


def assemble_rhs(mesh, layout, params, f_f=None, f_p=None, degree=LOAD_DEGREE):
    """Load vector F(V) = (f_f, v_f) + rho g (f_p, psi) over all dofs."""
    b = np.zeros(layout.ndof)
    if f_f is not None and layout.fluid_tris.size:
        tris = layout.fluid_tris
        ref, wdet = _tri_rule(mesh, tris, degree)
        x = map_to_physical(mesh, tris, ref)
        f = np.asarray(f_f(x), dtype=float)
        vals, _, _ = scalar_tables(mesh, tris, ref)
        loc = np.concatenate(
            [np.einsum("tq,tq,tqi->ti", wdet, f[..., 0], vals),
             np.einsum("tq,tq,tqi->ti", wdet, f[..., 1], vals)],
            axis=1,
        )
        np.add.at(b, layout.uf_dofs(tris), loc)
    if f_p is not None and layout.porous_tris.size:
        tris = layout.porous_tris
        ref, wdet = _tri_rule(mesh, tris, degree)
        x = map_to_physical(mesh, tris, ref)
        f = np.asarray(f_p(x), dtype=float)
        lam = np.column_stack([1 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
        loc = params.rho_g * np.einsum("tq,tq,qi->ti", wdet, f, lam)
        np.add.at(b, layout.phi_dofs(tris), loc)
        if params.div_penalty > 0:
            _, div = bdm_tables(mesh, tris, ref[:1])
            mean = np.einsum("tq,tq->t", wdet, f)
            loc = params.div_penalty * params.rho_g * mean[:, None] * div
            np.add.at(b, layout.up_dofs(tris), loc)
    return b


def pressure_mean_row(mesh, layout):
    """Vector r with r @ x = integral of p_h over the fluid region."""
    r = np.zeros(layout.ndof)
    tris = layout.fluid_tris
    np.add.at(r, layout.p_dofs(tris), np.repeat(mesh.areas[tris][:, None] / 3.0, 3, axis=1))
    return r


def assemble_system(mesh, params, f_f=None, f_p=None, layout=None, bc_values=None,
                    mean_target=0.0, mass_trace="porous"):
    """Assemble L + J and F for a mesh; returns a :class:`CoupledSystem`."""
    if layout is None:
        layout = build_dof_layout(mesh)
    trip = _Triplets()
    assemble_stokes_block(mesh, layout, params, trip)
    assemble_darcy_block(mesh, layout, params, trip)
    assemble_interface_coupling(mesh, layout, params, trip, mass_trace)
    A = trip.to_csr(layout.ndof)
    b = assemble_rhs(mesh, layout, params, f_f, f_p)
    if bc_values is None:
        bc_values = np.zeros(layout.ndof)
    return CoupledSystem(A, b, layout, params, np.asarray(bc_values, dtype=float),
                         pressure_mean_row(mesh, layout), float(mean_target))
