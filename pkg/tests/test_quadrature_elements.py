import numpy as np
import pytest

from oracles import duffy_rule, gauss_segment, global_normal, monomial_integral
from stokes_darcy.dofs import build_dof_layout
from stokes_darcy.elements import bdm_tables, eval_basis, map_to_physical, scalar_tables
from stokes_darcy.mesh import POROUS, bisect, build_rectangle_benchmark
from stokes_darcy.quadrature import MAX_TRIANGLE_DEGREE, make_quadrature

CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_EDGES = [(CORNERS[1], CORNERS[2]), (CORNERS[2], CORNERS[0]), (CORNERS[0], CORNERS[1])]


def test_oracle_rule_is_exact():
    pts, w = duffy_rule(10)
    for a in range(10):
        for b in range(10 - a):
            assert w @ (pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(monomial_integral(a, b), rel=1e-13)


@pytest.mark.parametrize("degree", range(MAX_TRIANGLE_DEGREE + 1))
def test_triangle_rule_exact_to_declared_degree(degree):
    rule = make_quadrature("triangle", degree)
    xi, eta = rule.reference_points.T
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = monomial_integral(a, b)
            assert abs(rule.weights @ (xi**a * eta**b) - exact) <= 1e-12 * max(exact, 1e-3)


@pytest.mark.parametrize("degree", range(0, 22, 3))
def test_edge_rule_exact(degree):
    rule = make_quadrature("edge", degree)
    s = rule.reference_points
    for k in range(degree + 1):
        assert rule.weights @ s**k == pytest.approx(1.0 / (k + 1), abs=1e-13)


def test_rule_limits():
    with pytest.raises(ValueError):
        make_quadrature("triangle", MAX_TRIANGLE_DEGREE + 1)
    with pytest.raises(ValueError):
        make_quadrature("square", 2)
    with pytest.raises(ValueError):
        make_quadrature("edge", -1)


def test_p1_kronecker_delta():
    tab = eval_basis("P1-bubble", CORNERS)
    assert np.allclose(tab.values[:, :3], np.eye(3), atol=1e-12)
    assert np.allclose(tab.values[:, 3], 0.0, atol=1e-12)


def test_bubble_vanishes_on_boundary_and_peaks_at_centroid():
    s, _ = gauss_segment(7)
    for a, b in REF_EDGES:
        pts = a + s[:, None] * (b - a)
        assert np.abs(eval_basis("P1-bubble", pts).values[:, 3]).max() <= 1e-12
    centre = eval_basis("P1-bubble", [[1 / 3, 1 / 3]]).values[0, 3]
    assert centre == pytest.approx(1.0, abs=1e-12)


def test_scalar_derivatives_match_finite_differences():
    pts = np.array([[0.2, 0.3], [0.1, 0.7], [0.5, 0.25]])
    tab = eval_basis("P1-bubble", pts)
    eps = 1e-6
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        fd = (eval_basis("P1-bubble", pts + step).values - eval_basis("P1-bubble", pts - step).values) / (2 * eps)
        assert np.allclose(fd, tab.derivatives[..., d], atol=1e-8)


def test_bdm_reference_edge_moment_duality():
    s, w = gauss_segment(6)
    M = np.zeros((6, 6))
    for i, (a, b) in enumerate(REF_EDGES):
        L = np.linalg.norm(b - a)
        t = (b - a) / L
        n = np.array([t[1], -t[0]])
        pts = a + s[:, None] * (b - a)
        flux = eval_basis("BDM1", pts).values @ n  # (nq, 6)
        M[2 * i] = L * w @ flux
        M[2 * i + 1] = L * (w * (2 * s - 1)) @ flux
    assert np.allclose(M, np.eye(6), atol=1e-12)


def test_bdm_divergence_constant_and_consistent():
    rng = np.random.default_rng(0)
    pts = rng.dirichlet(np.ones(3), size=3)[:, 1:]
    tab = eval_basis("BDM1", pts)
    # fit the linear field exactly from its values at three points
    X = np.column_stack([np.ones(3), pts])
    for j in range(6):
        c = np.linalg.solve(X, tab.values[:, j, :])
        assert c[1, 0] + c[2, 1] == pytest.approx(tab.derivatives[0, j], abs=1e-12)
    assert np.ptp(tab.derivatives, axis=0).max() <= 1e-12
    # divergence theorem: |K| div = total outward flux = zeroth moment
    expected = np.array([1.0, 0.0] * 3) / 0.5
    assert np.allclose(tab.derivatives[0], expected, atol=1e-12)


def test_physical_bdm_duality_with_global_normals():
    mesh = bisect(build_rectangle_benchmark(2, 4), [1, 6])
    tris = np.flatnonzero(mesh.region == POROUS)
    layout = build_dof_layout(mesh)
    s, w = gauss_segment(6)
    dofs = layout.up_dofs(tris)
    for k, t in enumerate(tris):
        for i, e in enumerate(mesh.tri_edges[t]):
            a, b = mesh.vertices[mesh.edges[e]]
            x = a + s[:, None] * (b - a)
            vals, _ = bdm_tables(mesh, np.array([t]), _to_ref(mesh, t, x)[None])
            flux = vals[0] @ global_normal(mesh, e)  # (nq, 6)
            L = np.linalg.norm(b - a)
            m0 = L * w @ flux
            m1 = L * (w * (2 * s - 1)) @ flux
            for j in range(6):
                want0 = float(j == 2 * i)
                want1 = float(j == 2 * i + 1)
                assert m0[j] == pytest.approx(want0, abs=1e-12)
                assert m1[j] == pytest.approx(want1, abs=1e-12)
        assert len(set(dofs[k])) == 6


def _to_ref(mesh, t, x):
    P = mesh.vertices[mesh.triangles[t]]
    B = np.column_stack([P[1] - P[0], P[2] - P[0]])
    return np.linalg.solve(B, (x - P[0]).T).T


def test_bdm_normal_flux_continuous_across_edges():
    mesh = build_rectangle_benchmark(4, 4)
    layout = build_dof_layout(mesh)
    rng = np.random.default_rng(5)
    coef = rng.standard_normal(layout.ndof)
    s, _ = gauss_segment(3)
    for e in mesh.edges_of_class(1):
        t1, t2 = mesh.edge_tris[e]
        a, b = mesh.vertices[mesh.edges[e]]
        x = a + s[:, None] * (b - a)
        n = global_normal(mesh, e)
        v = []
        for t in (t1, t2):
            vals, _ = bdm_tables(mesh, np.array([t]), _to_ref(mesh, t, x)[None])
            v.append(np.einsum("j,qja->qa", coef[layout.up_dofs(np.array([t]))[0]], vals[0]) @ n)
        assert np.allclose(v[0], v[1], atol=1e-12)


def test_scalar_tables_map_gradients():
    mesh = build_rectangle_benchmark(2, 2)
    tris = np.arange(mesh.nt)
    ref = np.array([[0.2, 0.3]])
    vals, grads, _ = scalar_tables(mesh, tris, ref, bubble=False)
    x = map_to_physical(mesh, tris, ref)
    # a linear field reproduces itself
    f = lambda p: 2.0 * p[..., 0] - 3.0 * p[..., 1] + 1.0  # noqa: E731
    nodal = f(mesh.vertices[mesh.triangles])
    assert np.allclose(np.einsum("ti,tqi->tq", nodal, vals), f(x), atol=1e-14)
    assert np.allclose(np.einsum("ti,tqia->tqa", nodal, grads), [2.0, -3.0], atol=1e-13)


def test_reference_point_validation():
    with pytest.raises(ValueError):
        eval_basis("P1", [[0.8, 0.8]])
    with pytest.raises(ValueError):
        eval_basis("P2", [[0.1, 0.1]])
