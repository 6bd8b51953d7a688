"""Two-region triangulations of a polygonal domain.

A :class:`TwoRegionMesh` stores index arrays only.  Triangles are kept
counter-clockwise with the newest vertex first, so local edge 0 (opposite
vertex 0) is the refinement edge used by newest-vertex bisection.  Local
edge ``i`` is always the edge opposite local vertex ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels

FLUID = 0
POROUS = 1

INTERIOR_FLUID = 0
INTERIOR_POROUS = 1
INTERFACE = 2
BOUNDARY_FLUID = 3
BOUNDARY_POROUS = 4

EDGE_CLASS_NAMES = {
    INTERIOR_FLUID: "interior-fluid",
    INTERIOR_POROUS: "interior-porous",
    INTERFACE: "interface",
    BOUNDARY_FLUID: "boundary-fluid",
    BOUNDARY_POROUS: "boundary-porous",
}

# vertex pairs of local edge i (opposite vertex i), in counter-clockwise order
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Raised for meshes that violate a two-region invariant."""


class NonConformingMeshError(MeshError):
    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class EdgeClassification(NamedTuple):
    codes: np.ndarray
    counts: dict


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    d1 = vertices[triangles[:, 1]] - p0
    d2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class TwoRegionMesh:
    """Conforming triangulation tagged into fluid and porous triangles.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, newest vertex first
    region : (nt,) int array with values ``FLUID`` or ``POROUS``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    _edge_data: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64, copy=True)
        r = np.ascontiguousarray(self.region, dtype=np.int8)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (nt, 3)")
        if r.shape != (t.shape[0],):
            raise MeshError("region must have one tag per triangle")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("triangle references a missing vertex")
        if not np.isin(r, (FLUID, POROUS)).all():
            raise MeshError("region tags must be FLUID (0) or POROUS (1)")
        area = _signed_areas(v, t)
        if np.any(np.abs(area) <= 1e-14 * max(1.0, np.ptp(v) ** 2)):
            bad = int(np.flatnonzero(np.abs(area) <= 1e-14 * max(1.0, np.ptp(v) ** 2))[0])
            raise MeshError(f"triangle {bad} has zero area")
        cw = area < 0
        # keep the newest vertex in slot 0, flip the other two
        t[cw, 1], t[cw, 2] = t[cw, 2].copy(), t[cw, 1].copy()
        for name, arr in (("vertices", v), ("triangles", t), ("region", r)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_edge_data", _build_edges(t, v.shape[0]))

    # -- topology ---------------------------------------------------------

    @property
    def nv(self):
        return self.vertices.shape[0]

    @property
    def nt(self):
        return self.triangles.shape[0]

    @property
    def edges(self):
        """(ne, 2) vertex pairs, lower index first."""
        return self._edge_data[0]

    @property
    def ne(self):
        return self.edges.shape[0]

    @property
    def tri_edges(self):
        """(nt, 3) global edge of local edge i (opposite local vertex i)."""
        return self._edge_data[1]

    @property
    def edge_tris(self):
        """(ne, 2) neighbouring triangles, -1 where absent."""
        return self._edge_data[2]

    @cached_property
    def edge_class(self):
        return classify_edges(self).codes

    def edges_of_class(self, code):
        return np.flatnonzero(self.edge_class == code)

    @cached_property
    def interface_edges(self):
        return self.edges_of_class(INTERFACE)

    @cached_property
    def interface_sides(self):
        """(n_gamma, 2) fluid and porous triangle of every interface edge."""
        et = self.edge_tris[self.interface_edges]
        fluid_first = self.region[et[:, 0]] == FLUID
        return np.where(fluid_first[:, None], et, et[:, ::-1])

    # -- geometry ---------------------------------------------------------

    @cached_property
    def areas(self):
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def jacobians(self):
        """(nt, 2, 2) affine maps B with x = x0 + B xi."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.jacobians)

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def tri_edge_lengths(self):
        return self.edge_lengths[self.tri_edges]

    @cached_property
    def diameters(self):
        """h_K, the longest edge of each triangle."""
        return self.tri_edge_lengths.max(axis=1)

    @cached_property
    def inball_diameters(self):
        """rho_K, diameter of the inscribed circle."""
        return 4.0 * self.areas / self.tri_edge_lengths.sum(axis=1)

    @property
    def h(self):
        return float(self.diameters.max())

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def edge_normals(self):
        """Unit normal per edge.

        Rotated clockwise from the lower-to-higher vertex tangent, except on
        the interface where it points out of the fluid triangle.
        """
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        d = d / self.edge_lengths[:, None]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        gam = self.interface_edges
        if gam.size:
            kf = self.interface_sides[:, 0]
            mid = 0.5 * (self.vertices[self.edges[gam, 0]] + self.vertices[self.edges[gam, 1]])
            flip = np.einsum("ij,ij->i", n[gam], mid - self.centroids[kf]) < 0
            n[gam[flip]] *= -1.0
        return n

    @cached_property
    def edge_tangents(self):
        """Unit tangent obtained by rotating the normal counter-clockwise."""
        n = self.edge_normals
        return np.column_stack([-n[:, 1], n[:, 0]])

    @cached_property
    def outward_sign(self):
        """(nt, 3) +1 where the edge normal is outward for the triangle."""
        p = self.vertices
        mid = 0.5 * (p[self.edges[:, 0]] + p[self.edges[:, 1]])
        vec = mid[self.tri_edges] - self.centroids[:, None, :]
        dots = np.einsum("tik,tik->ti", self.edge_normals[self.tri_edges], vec)
        return np.where(dots > 0, 1, -1).astype(np.int8)

    @cached_property
    def direction_sign(self):
        """(nt, 3) +1 where the counter-clockwise local edge runs low-to-high."""
        a = self.triangles[:, LOCAL_EDGES[:, 0]]
        b = self.triangles[:, LOCAL_EDGES[:, 1]]
        return np.where(a < b, 1, -1).astype(np.int8)

    def region_area(self, tag):
        return float(self.areas[self.region == tag].sum())

    def min_angle(self):
        """Smallest interior angle over all triangles, in radians."""
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            w = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
            angles.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(angles))

    def validate(self, shape_bound=20.0):
        """Check the two-region invariants; raise :class:`MeshError` on failure."""
        cls = classify_edges(self)
        if cls.counts["interface"] == 0:
            raise MeshError("mesh has no interface edges")
        ratio = self.diameters / self.inball_diameters
        if ratio.max() > shape_bound:
            raise MeshError(
                f"shape regularity violated: h_K/rho_K = {ratio.max():.3g} > {shape_bound}"
            )
        _check_hanging_vertices(self)
        return cls


def _build_edges(triangles, nv):
    nt = triangles.shape[0]
    loc = triangles[:, LOCAL_EDGES]  # (nt, 3, 2)
    pairs = np.sort(loc.reshape(-1, 2), axis=1)
    keys = pairs[:, 0] * nv + pairs[:, 1]
    ukeys, first, inverse, counts = np.unique(
        keys, return_index=True, return_inverse=True, return_counts=True
    )
    if counts.max(initial=0) > 2:
        bad = int(np.flatnonzero(counts > 2)[0])
        e = pairs[first[bad]]
        raise NonConformingMeshError(
            f"edge ({e[0]}, {e[1]}) is shared by {counts[bad]} triangles", edge=tuple(e)
        )
    edges = pairs[first]
    tri_edges = inverse.reshape(nt, 3)
    edge_tris = np.full((edges.shape[0], 2), -1, dtype=np.int64)
    owner = np.repeat(np.arange(nt), 3)
    flat = tri_edges.ravel()
    order = np.argsort(flat, kind="stable")
    fs, os_ = flat[order], owner[order]
    start = np.r_[True, fs[1:] != fs[:-1]]
    edge_tris[fs[start], 0] = os_[start]
    edge_tris[fs[~start], 1] = os_[~start]
    for arr in (edges, tri_edges, edge_tris):
        arr.setflags(write=False)
    return edges, tri_edges, edge_tris


def _check_hanging_vertices(mesh):
    bnd = np.flatnonzero(mesh.edge_tris[:, 1] < 0)
    if bnd.size == 0:
        return
    p = mesh.vertices
    a = p[mesh.edges[bnd, 0]]
    b = p[mesh.edges[bnd, 1]]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    for k in range(bnd.size):
        rel = p - a[k]
        s = rel @ d[k] / L2[k]
        dist = np.abs(rel[:, 0] * d[k, 1] - rel[:, 1] * d[k, 0]) / np.sqrt(L2[k])
        inside = (s > 1e-10) & (s < 1 - 1e-10) & (dist < 1e-10 * np.sqrt(L2[k]))
        if inside.any():
            raise NonConformingMeshError(
                f"hanging vertex {int(np.flatnonzero(inside)[0])} on edge {int(bnd[k])}",
                edge=tuple(mesh.edges[bnd[k]]),
            )


def classify_edges(mesh):
    """Assign every edge one of the five classes.

    Returns an :class:`EdgeClassification` with the code array and a count
    per class name.
    """
    et = mesh.edge_tris
    r0 = mesh.region[et[:, 0]]
    has2 = et[:, 1] >= 0
    r1 = np.where(has2, mesh.region[np.maximum(et[:, 1], 0)], -1)
    codes = np.empty(mesh.ne, dtype=np.int8)
    codes[has2 & (r0 == FLUID) & (r1 == FLUID)] = INTERIOR_FLUID
    codes[has2 & (r0 == POROUS) & (r1 == POROUS)] = INTERIOR_POROUS
    codes[has2 & (r0 != r1)] = INTERFACE
    codes[~has2 & (r0 == FLUID)] = BOUNDARY_FLUID
    codes[~has2 & (r0 == POROUS)] = BOUNDARY_POROUS
    counts = {name: int((codes == c).sum()) for c, name in EDGE_CLASS_NAMES.items()}
    return EdgeClassification(codes, counts)


def build_rectangle_benchmark(nx, ny):
    """Structured mesh of the unit square with the interface at y = 1/2.

    Fluid occupies the upper half.  Each cell is cut along its rising
    diagonal; the right-angle vertex is stored as the newest vertex so the
    diagonal is the refinement edge.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError(f"benchmark needs nx, ny >= 1, got {nx}x{ny}")
    if ny % 2:
        raise ValueError(f"ny must be even so the interface y=1/2 is a grid line, got {ny}")
    x = np.linspace(0.0, 1.0, nx + 1)
    y = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(x, y)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v10, v11, v00])
    upper = np.column_stack([v01, v00, v11])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    cell_porous = (j + 0.5) < ny / 2
    region = np.repeat(np.where(cell_porous, POROUS, FLUID), 2)
    return TwoRegionMesh(vertices, triangles, region)


def bisect(mesh, marked):
    """Newest-vertex bisection of the marked triangles with conforming closure.

    ``marked`` is a boolean mask or an index array.  Children inherit the
    region tag and replace their parent in place, so triangle order is
    deterministic.
    """
    tri_mask = np.zeros(mesh.nt, dtype=bool)
    marked = np.asarray(marked)
    if marked.dtype == bool:
        if marked.shape != (mesh.nt,):
            raise ValueError("boolean marker must have one entry per triangle")
        tri_mask |= marked
    elif marked.size:
        if marked.min() < 0 or marked.max() >= mesh.nt:
            raise ValueError("marked triangle index out of range")
        tri_mask[marked.astype(np.int64)] = True
    if not tri_mask.any():
        return mesh

    edge_mask = np.zeros(mesh.ne, dtype=bool)
    edge_mask[mesh.tri_edges[tri_mask, 0]] = True
    edge_mask = _kernels.nvb_closure(mesh.tri_edges, mesh.edge_tris, edge_mask)

    cut = np.flatnonzero(edge_mask)
    nv_new = mesh.nv + cut.size
    ev = mesh.edges[cut]
    midpoints = 0.5 * (mesh.vertices[ev[:, 0]] + mesh.vertices[ev[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    keys = ev[:, 0] * nv_new + ev[:, 1]  # already sorted: edges are sorted by key
    mids = mesh.nv + np.arange(cut.size)

    tris = np.array(mesh.triangles)
    region = np.array(mesh.region)
    while True:
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        k = np.minimum(b, c) * nv_new + np.maximum(b, c)
        pos = np.searchsorted(keys, k)
        pos_c = np.minimum(pos, keys.size - 1)
        hit = (pos < keys.size) & (keys[pos_c] == k)
        if not hit.any():
            break
        m = mids[pos_c[hit]]
        start = np.arange(tris.shape[0]) + np.cumsum(hit) - hit
        out = np.empty((tris.shape[0] + hit.sum(), 3), dtype=np.int64)
        out_region = np.empty(out.shape[0], dtype=np.int8)
        keep = ~hit
        out[start[keep]] = tris[keep]
        out_region[start[keep]] = region[keep]
        s = start[hit]
        out[s] = np.column_stack([m, a[hit], b[hit]])
        out[s + 1] = np.column_stack([m, c[hit], a[hit]])
        out_region[s] = region[hit]
        out_region[s + 1] = region[hit]
        tris, region = out, out_region
    return TwoRegionMesh(vertices, tris, region)


def refine_uniform(mesh):
    """Two rounds of bisection of every triangle; halves h on the benchmark."""
    mesh = bisect(mesh, np.ones(mesh.nt, dtype=bool))
    return bisect(mesh, np.ones(mesh.nt, dtype=bool))


# -- plain-text format ----------------------------------------------------

def write_mesh(path, mesh):
    """Write ``ndim=2 nv nt`` then ``x y`` lines then ``v0 v1 v2 region`` lines."""
    lines = [f"ndim=2 {mesh.nv} {mesh.nt}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    tags = np.where(mesh.region == FLUID, "f", "p")
    lines += [f"{a} {b} {c} {g}" for (a, b, c), g in zip(mesh.triangles.tolist(), tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Read the format written by :func:`write_mesh`.

    The first vertex of each triangle is taken as its newest vertex.
    """
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    if not rows or not rows[0][0].startswith("ndim="):
        raise MeshError(f"{path}: missing 'ndim=2 nv nt' header")
    head = rows[0]
    if head[0] != "ndim=2" or len(head) != 3:
        raise MeshError(f"{path}: header must read 'ndim=2 nv nt'")
    nv, nt = int(head[1]), int(head[2])
    if len(rows) != 1 + nv + nt:
        raise MeshError(f"{path}: expected {nv} vertex and {nt} triangle lines")
    vertices = np.array([[float(x) for x in r] for r in rows[1:1 + nv]])
    tri_rows = rows[1 + nv:]
    if any(len(r) != 4 or r[3] not in ("f", "p") for r in tri_rows):
        raise MeshError(f"{path}: triangle lines must read 'v0 v1 v2 f|p'")
    triangles = np.array([[int(x) for x in r[:3]] for r in tri_rows], dtype=np.int64)
    region = np.array([FLUID if r[3] == "f" else POROUS for r in tri_rows])
    return TwoRegionMesh(vertices, triangles.reshape(-1, 3), region)
