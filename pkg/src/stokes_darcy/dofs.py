"""Global numbering of the four discrete fields.

Blocks are laid out as ``u_f | p | u_p | phi``:

* ``u_f`` (MINI): x-components at fluid vertices, y-components at fluid
  vertices, x-bubbles per fluid triangle, y-bubbles per fluid triangle;
* ``p``: one value per fluid vertex;
* ``u_p`` (BDM1): two Legendre moments of u.n per porous edge;
* ``phi``: one value per porous vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import bdm_signs
from .mesh import BOUNDARY_FLUID, BOUNDARY_POROUS, FLUID, POROUS

BLOCKS = ("u_f", "p", "u_p", "phi")


def _compress(ids, size):
    """Map from global ids to 0..len(unique)-1, -1 elsewhere."""
    uniq = np.unique(ids)
    index = np.full(size, -1, dtype=np.int64)
    index[uniq] = np.arange(uniq.size)
    return uniq, index


@dataclass(frozen=True, eq=False)
class DofLayout:
    mesh: object
    fluid_tris: np.ndarray
    porous_tris: np.ndarray
    fluid_vertices: np.ndarray
    porous_vertices: np.ndarray
    porous_edges: np.ndarray
    fluid_vertex_index: np.ndarray
    porous_vertex_index: np.ndarray
    porous_edge_index: np.ndarray
    offsets: dict = field(repr=False)

    @property
    def n_uf(self):
        return 2 * (self.fluid_vertices.size + self.fluid_tris.size)

    @property
    def n_p(self):
        return self.fluid_vertices.size

    @property
    def n_up(self):
        return 2 * self.porous_edges.size

    @property
    def n_phi(self):
        return self.porous_vertices.size

    @property
    def ndof(self):
        return self.n_uf + self.n_p + self.n_up + self.n_phi

    def block_slice(self, name):
        start = self.offsets[name]
        size = {"u_f": self.n_uf, "p": self.n_p, "u_p": self.n_up, "phi": self.n_phi}[name]
        return slice(start, start + size)

    def block_of(self, dof):
        """Name of the block containing a global dof."""
        for name in BLOCKS:
            s = self.block_slice(name)
            if s.start <= dof < s.stop:
                return name
        raise IndexError(dof)

    # -- element dof maps (global indices) ---------------------------------

    def uf_dofs(self, tris=None):
        """(n, 8): [x at 3 vertices, x bubble, y at 3 vertices, y bubble]."""
        tris = self.fluid_tris if tris is None else np.asarray(tris)
        nvf, ntf = self.fluid_vertices.size, self.fluid_tris.size
        fv = self.fluid_vertex_index[self.mesh.triangles[tris]]
        fb = self.fluid_tri_index[tris]
        off = self.offsets["u_f"]
        return off + np.column_stack([fv, 2 * nvf + fb, nvf + fv, 2 * nvf + ntf + fb])

    def p_dofs(self, tris=None):
        tris = self.fluid_tris if tris is None else np.asarray(tris)
        return self.offsets["p"] + self.fluid_vertex_index[self.mesh.triangles[tris]]

    def up_dofs(self, tris=None):
        """(n, 6): moments k of local edge i at column 2*i + k."""
        tris = self.porous_tris if tris is None else np.asarray(tris)
        pe = self.porous_edge_index[self.mesh.tri_edges[tris]]
        d = np.stack([2 * pe, 2 * pe + 1], axis=2).reshape(len(tris), 6)
        return self.offsets["u_p"] + d

    def up_signs(self, tris=None):
        tris = self.porous_tris if tris is None else np.asarray(tris)
        return bdm_signs(self.mesh, tris)

    def phi_dofs(self, tris=None):
        tris = self.porous_tris if tris is None else np.asarray(tris)
        return self.offsets["phi"] + self.porous_vertex_index[self.mesh.triangles[tris]]

    @property
    def fluid_tri_index(self):
        idx = np.full(self.mesh.nt, -1, dtype=np.int64)
        idx[self.fluid_tris] = np.arange(self.fluid_tris.size)
        return idx

    def edge_up_dofs(self, edges):
        """(n, 2) global BDM1 dofs of porous edges."""
        pe = self.porous_edge_index[np.asarray(edges)]
        return self.offsets["u_p"] + np.column_stack([2 * pe, 2 * pe + 1])

    # -- boundary conditions ------------------------------------------------

    @property
    def dirichlet_uf_vertices(self):
        """Vertices on Gamma_f (no-slip boundary of the fluid region)."""
        e = self.mesh.edges_of_class(BOUNDARY_FLUID)
        return np.unique(self.mesh.edges[e])

    @property
    def noflux_edges(self):
        """Edges on Gamma_p (impermeable boundary of the porous region)."""
        return self.mesh.edges_of_class(BOUNDARY_POROUS)

    @property
    def constrained(self):
        """Sorted global dofs fixed by boundary conditions."""
        v = self.fluid_vertex_index[self.dirichlet_uf_vertices]
        nvf = self.fluid_vertices.size
        uf = self.offsets["u_f"] + np.concatenate([v, nvf + v])
        up = self.edge_up_dofs(self.noflux_edges).ravel()
        return np.sort(np.concatenate([uf, up]))

    @property
    def free(self):
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)


def build_dof_layout(mesh):
    """Number the MINI, P1, BDM1 and P1 unknowns of a two-region mesh."""
    fluid_tris = np.flatnonzero(mesh.region == FLUID)
    porous_tris = np.flatnonzero(mesh.region == POROUS)
    fv, fv_index = _compress(mesh.triangles[fluid_tris].ravel(), mesh.nv)
    pv, pv_index = _compress(mesh.triangles[porous_tris].ravel(), mesh.nv)
    pe, pe_index = _compress(mesh.tri_edges[porous_tris].ravel(), mesh.ne)
    n_uf = 2 * (fv.size + fluid_tris.size)
    offsets = {"u_f": 0, "p": n_uf, "u_p": n_uf + fv.size, "phi": n_uf + fv.size + 2 * pe.size}
    return DofLayout(
        mesh, fluid_tris, porous_tris, fv, pv, pe, fv_index, pv_index, pe_index, offsets
    )
