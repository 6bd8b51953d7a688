"""VTK legacy output, CSV tables and key=value configuration files."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .mesh import FLUID, POROUS

VTK_TRIANGLE = 5
REGION_NAMES = {FLUID: "fluid", POROUS: "porous"}
INDICATOR_COLUMNS = ["element_id", "region", "theta_sq", "zeta_sq"] + [
    f"term_{i}" for i in range(1, 6)
]
HISTORY_COLUMNS = ["iter", "ndof", "theta", "zeta", "err_h_norm", "effectivity"]
CONVERGENCE_COLUMNS = ["level", "h", "ndof", "err_h_norm", "theta", "zeta", "rate"]


def fmt(x):
    """Round-trip float formatting; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_indicator_csv(path, indicators):
    mesh = indicators.mesh
    theta_sq = indicators.theta_sq
    rows = (
        [k, REGION_NAMES[int(mesh.region[k])], theta_sq[k], indicators.zeta_sq[k],
         *indicators.terms[k]]
        for k in range(mesh.nt)
    )
    return _write_csv(path, INDICATOR_COLUMNS, rows)


def write_history_csv(path, history):
    rows = (
        [r.iteration, r.ndof, r.theta, r.zeta, r.err_h_norm, r.effectivity]
        for r in history.records
    )
    return _write_csv(path, HISTORY_COLUMNS, rows)


def write_convergence_csv(path, rows):
    """rows: dicts with the keys of ``CONVERGENCE_COLUMNS``."""
    return _write_csv(path, CONVERGENCE_COLUMNS, ([r.get(c) for c in CONVERGENCE_COLUMNS] for r in rows))


# -- VTK ------------------------------------------------------------------------

def _as3(v):
    v = np.asarray(v, dtype=float)
    return np.column_stack([v, np.zeros(len(v))]) if v.shape[1] == 2 else v


def write_vtk(path, mesh, point_data=None, cell_data=None, title="stokes-darcy"):
    """Legacy ASCII unstructured grid with scalar and 2D vector attributes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.nv} double")
    lines += [f"{fmt(x)} {fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.nt} {4 * mesh.nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.nt}")
    lines += [str(VTK_TRIANGLE)] * mesh.nt
    for kind, n, data in (("POINT_DATA", mesh.nv, point_data), ("CELL_DATA", mesh.nt, cell_data)):
        if not data:
            continue
        lines.append(f"{kind} {n}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape[0] != n:
                raise ValueError(f"{name}: expected {n} values, got {values.shape[0]}")
            if values.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [fmt(v) for v in values]
            else:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(fmt(c) for c in row) for row in _as3(values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path):
    """Parse files written by :func:`write_vtk` (and other simple legacy ASCII grids)."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    if tokens[2].strip() != "ASCII":
        raise ValueError("only ASCII VTK files are supported")
    words = " ".join(tokens[3:]).split()
    out = {"title": tokens[1], "point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(words):
        w = words[i]
        if w == "DATASET":
            if words[i + 1] != "UNSTRUCTURED_GRID":
                raise ValueError("only unstructured grids are supported")
            i += 2
        elif w == "POINTS":
            n = int(words[i + 1])
            vals = np.array(words[i + 3: i + 3 + 3 * n], dtype=float)
            out["points"] = vals.reshape(n, 3)
            i += 3 + 3 * n
        elif w == "CELLS":
            n, size = int(words[i + 1]), int(words[i + 2])
            vals = np.array(words[i + 3: i + 3 + size], dtype=np.int64)
            cells, j = [], 0
            for _ in range(n):
                k = vals[j]
                cells.append(vals[j + 1: j + 1 + k])
                j += k + 1
            out["cells"] = np.array(cells)
            i += 3 + size
        elif w == "CELL_TYPES":
            n = int(words[i + 1])
            out["cell_types"] = np.array(words[i + 2: i + 2 + n], dtype=np.int64)
            i += 2 + n
        elif w in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if w == "POINT_DATA" else "cell_data"
            out[section + "_size"] = int(words[i + 1])
            i += 2
        elif w == "SCALARS":
            # SCALARS name type [ncomp] LOOKUP_TABLE table
            name = words[i + 1]
            i += 3
            ncomp = 1
            if words[i] != "LOOKUP_TABLE":
                ncomp = int(words[i])
                i += 1
            i += 2
            n = out[section + "_size"]
            vals = np.array(words[i: i + n * ncomp], dtype=float)
            out[section][name] = vals if ncomp == 1 else vals.reshape(n, ncomp)
            i += n * ncomp
        elif w == "VECTORS":
            name = words[i + 1]
            n = out[section + "_size"]
            out[section][name] = np.array(words[i + 3: i + 3 + 3 * n], dtype=float).reshape(n, 3)
            i += 3 + 3 * n
        else:
            raise ValueError(f"unexpected VTK token {w!r}")
    return out


def solution_point_cell_data(sol):
    """Point and cell attributes for a discrete solution.

    Point data: p_h on fluid vertices, phi_h on porous vertices, the nodal
    part of u_fh (zero where a field is not defined).  Cell data: region,
    u_fh and u_ph at centroids, div u_ph.
    """
    mesh, layout = sol.mesh, sol.layout
    p = np.zeros(mesh.nv)
    p[layout.fluid_vertices] = sol.block("p")
    phi = np.zeros(mesh.nv)
    phi[layout.porous_vertices] = sol.block("phi")
    uf = sol.block("u_f")
    nvf = layout.fluid_vertices.size
    ufv = np.zeros((mesh.nv, 2))
    ufv[layout.fluid_vertices, 0] = uf[:nvf]
    ufv[layout.fluid_vertices, 1] = uf[nvf:2 * nvf]
    centre = np.array([[1.0 / 3.0, 1.0 / 3.0]])
    uf_c = np.zeros((mesh.nt, 2))
    up_c = np.zeros((mesh.nt, 2))
    div_c = np.zeros(mesh.nt)
    if layout.fluid_tris.size:
        uf_c[layout.fluid_tris] = sol.u_f(layout.fluid_tris, centre)[0][:, 0]
    if layout.porous_tris.size:
        v, d = sol.u_p(layout.porous_tris, centre)
        up_c[layout.porous_tris] = v[:, 0]
        div_c[layout.porous_tris] = d
    point = {"p": p, "phi": phi, "u_f": ufv}
    cell = {"region": mesh.region.astype(float), "u_f": uf_c, "u_p": up_c, "div_u_p": div_c}
    return point, cell


def write_solution_vtk(path, sol):
    point, cell = solution_point_cell_data(sol)
    return write_vtk(path, sol.mesh, point, cell)


# -- configuration --------------------------------------------------------------

class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        out[key] = value
    return out
