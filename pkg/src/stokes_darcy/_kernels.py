"""Element-loop kernels with a numba path and a pure-numpy path.

The backend is chosen once at import from ``STOKES_DARCY_KERNELS``
(``numba`` or ``numpy``).  The default is ``numba`` when it imports.
Both paths return identical arrays up to rounding.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True}


def _requested_backend():
    name = os.environ.get("STOKES_DARCY_KERNELS", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"STOKES_DARCY_KERNELS must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


BACKEND = _requested_backend()


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------

def sym_grad_stiffness_numpy(grads, wdet):
    """Local matrices of (D(u), D(v)) for a scalar basis used componentwise.

    grads : (nt, nq, nb, 2) physical gradients at quadrature points
    wdet  : (nt, nq) quadrature weights times element area

    Returns (nt, 2*nb, 2*nb) with component-major ordering.
    """
    nt, nq, nb, _ = grads.shape
    gg = np.einsum("tq,tqia,tqja->tij", wdet, grads, grads)
    # cross[t, d, c, i, j] = sum_q w d_d psi_i d_c psi_j
    cross = np.einsum("tq,tqid,tqjc->tdcij", wdet, grads, grads)
    out = np.empty((nt, 2 * nb, 2 * nb))
    for c in range(2):
        for d in range(2):
            blk = 0.5 * cross[:, d, c]
            if c == d:
                blk = blk + 0.5 * gg
            out[:, c * nb:(c + 1) * nb, d * nb:(d + 1) * nb] = blk
    return out


def weighted_vector_mass_numpy(vals, weight, wdet):
    """Local matrices of (M v_j, v_i) for vector basis values.

    vals   : (nt, nq, nb, 2)
    weight : (nt, 2, 2) per-element constant tensor
    wdet   : (nt, nq)
    """
    mv = np.einsum("tab,tqjb->tqja", weight, vals)
    return np.einsum("tq,tqia,tqja->tij", wdet, vals, mv)


def nvb_closure_numpy(tri_edges, edge_tris, marked):
    """Close a set of marked edges under the newest-vertex rule.

    A triangle with any marked edge must have its refinement edge (local
    edge 0) marked as well.  Iterates to the fixed point.
    """
    marked = marked.copy()
    while True:
        hit = marked[tri_edges].any(axis=1) & ~marked[tri_edges[:, 0]]
        if not hit.any():
            return marked
        marked[tri_edges[hit, 0]] = True


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(**JIT_OPTIONS)
    def _sym_grad_stiffness_jit(grads, wdet):
        nt, nq, nb, _ = grads.shape
        out = np.zeros((nt, 2 * nb, 2 * nb))
        for t in range(nt):
            for q in range(nq):
                w = wdet[t, q]
                for i in range(nb):
                    gi0 = grads[t, q, i, 0]
                    gi1 = grads[t, q, i, 1]
                    for j in range(nb):
                        gj0 = grads[t, q, j, 0]
                        gj1 = grads[t, q, j, 1]
                        dot = gi0 * gj0 + gi1 * gj1
                        # (c, d) blocks: 0.5 * (delta_cd dot + d_d psi_i d_c psi_j)
                        out[t, i, j] += w * 0.5 * (dot + gi0 * gj0)
                        out[t, i, nb + j] += w * 0.5 * (gi1 * gj0)
                        out[t, nb + i, j] += w * 0.5 * (gi0 * gj1)
                        out[t, nb + i, nb + j] += w * 0.5 * (dot + gi1 * gj1)
        return out

    @njit(**JIT_OPTIONS)
    def _weighted_vector_mass_jit(vals, weight, wdet):
        nt, nq, nb, _ = vals.shape
        out = np.zeros((nt, nb, nb))
        for t in range(nt):
            m00 = weight[t, 0, 0]
            m01 = weight[t, 0, 1]
            m10 = weight[t, 1, 0]
            m11 = weight[t, 1, 1]
            for q in range(nq):
                w = wdet[t, q]
                for j in range(nb):
                    a = m00 * vals[t, q, j, 0] + m01 * vals[t, q, j, 1]
                    b = m10 * vals[t, q, j, 0] + m11 * vals[t, q, j, 1]
                    for i in range(nb):
                        out[t, i, j] += w * (vals[t, q, i, 0] * a + vals[t, q, i, 1] * b)
        return out

    @njit(**JIT_OPTIONS)
    def _nvb_closure_jit(tri_edges, edge_tris, marked):
        marked = marked.copy()
        stack = np.empty(marked.shape[0], dtype=np.int64)
        top = 0
        for e in range(marked.shape[0]):
            if marked[e]:
                stack[top] = e
                top += 1
        while top > 0:
            top -= 1
            e = stack[top]
            for s in range(2):
                t = edge_tris[e, s]
                if t < 0:
                    continue
                base = tri_edges[t, 0]
                if not marked[base]:
                    marked[base] = True
                    stack[top] = base
                    top += 1
        return marked


def sym_grad_stiffness(grads, wdet):
    if BACKEND == "numba":
        return _sym_grad_stiffness_jit(np.ascontiguousarray(grads), np.ascontiguousarray(wdet))
    return sym_grad_stiffness_numpy(grads, wdet)


def weighted_vector_mass(vals, weight, wdet):
    if BACKEND == "numba":
        return _weighted_vector_mass_jit(
            np.ascontiguousarray(vals), np.ascontiguousarray(weight), np.ascontiguousarray(wdet)
        )
    return weighted_vector_mass_numpy(vals, weight, wdet)


def nvb_closure(tri_edges, edge_tris, marked):
    if BACKEND == "numba":
        return _nvb_closure_jit(
            np.ascontiguousarray(tri_edges, dtype=np.int64),
            np.ascontiguousarray(edge_tris, dtype=np.int64),
            np.ascontiguousarray(marked, dtype=np.bool_),
        )
    return nvb_closure_numpy(tri_edges, edge_tris, marked)
