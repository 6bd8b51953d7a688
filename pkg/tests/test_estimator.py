import dataclasses

import numpy as np
import pytest
import sympy as sy

import oracles
from stokes_darcy.adaptivity import Problem
from stokes_darcy.assembly import PhysicalParams
from stokes_darcy.dofs import build_dof_layout
from stokes_darcy.estimator import (
    FLUID_TERMS,
    POROUS_TERMS,
    AnalyticFields,
    DataProjection,
    EstimatorOptions,
    MeshMismatchError,
    compute_h_norm,
    compute_oscillation,
    estimate,
)
from stokes_darcy.manufactured import get_case
from stokes_darcy.mesh import (
    FLUID,
    INTERIOR_POROUS,
    POROUS,
    bisect,
    build_rectangle_benchmark,
    refine_uniform,
)
from stokes_darcy.solver import DiscreteSolution, interpolate, solve


@pytest.fixture(scope="module")
def solved():
    case = get_case("anisotropic")
    mesh = bisect(build_rectangle_benchmark(4, 4), [3, 17, 20])
    problem = Problem.from_case(case)
    sol = solve(problem.assemble(mesh))
    ind = estimate(sol, case.params, case.f_f, case.f_p)
    return case, mesh, sol, ind


def _edge(mesh, e, n=10):
    s, w = oracles.gauss_segment(n)
    a, b = mesh.vertices[mesh.edges[e]]
    L = np.linalg.norm(b - a)
    return a + s[:, None] * (b - a), L * w, L


def _diam(mesh, t):
    return oracles.brute_force_h(mesh.vertices, mesh.triangles[[t]])


def test_fluid_terms_match_oracle(solved):
    case, mesh, sol, ind = solved
    params, layout = case.params, sol.layout
    proj = DataProjection.build(mesh, case.f_f, case.f_p)
    want = np.zeros((mesh.nt, 4))
    eps = 1e-4
    for t in layout.fluid_tris:
        f = oracles.LocalFields(mesh, layout, sol.coefficients, t)
        x, w = oracles.triangle_points(f.P)
        _, g = f.u_f(x)
        area = w.sum()
        # div D(u) from central differences of the quadratic gradient
        dD = np.zeros((len(x), 2))
        for a in range(2):
            step = np.zeros(2)
            step[a] = eps
            gp, gm = f.u_f(x + step)[1], f.u_f(x - step)[1]
            Dp = 0.5 * (gp + np.swapaxes(gp, 1, 2))
            Dm = 0.5 * (gm + np.swapaxes(gm, 1, 2))
            dD += (Dp[:, :, a] - Dm[:, :, a]) / (2 * eps)
        lam, G = oracles.barycentric(f.P, x)
        gradp = f.cp @ G
        ffh = (w @ case.f_f(x)) / area
        r = ffh + 2 * params.nu * dD - gradp
        want[t, 0] = _diam(mesh, t) ** 2 * (w @ (r**2).sum(1))
        want[t, 1] = w @ np.trace(g, axis1=1, axis2=2) ** 2
        assert np.allclose(proj.f_fh[t], ffh, rtol=1e-12)
    for e in mesh.interface_edges:
        t1, t2 = mesh.edge_tris[e]
        kf, kp = (t1, t2) if mesh.region[t1] == FLUID else (t2, t1)
        x, w, L = _edge(mesh, e)
        ff = oracles.LocalFields(mesh, layout, sol.coefficients, kf)
        fp = oracles.LocalFields(mesh, layout, sol.coefficients, kp)
        v, g = ff.u_f(x)
        D = 0.5 * (g + np.swapaxes(g, 1, 2))
        n = oracles.global_normal(mesh, e)
        tau = np.array([-n[1], n[0]])
        K = np.asarray(case.params.K)
        bjs = 2 * params.nu * (D @ tau) @ n + params.alpha / np.sqrt(tau @ K @ tau) * (v @ tau)
        stress = ff.p(x) - 2 * params.nu * (D @ n) @ n - params.rho_g * fp.phi(x)[0]
        want[kf, 2] += L * (w @ bjs**2)
        want[kf, 3] += L * (w @ stress**2)
    got = ind.terms[layout.fluid_tris, :4]
    assert np.allclose(got, want[layout.fluid_tris], rtol=1e-7, atol=1e-14)
    assert np.all(ind.terms[layout.fluid_tris, 4] == 0)


def test_porous_terms_match_oracle(solved):
    case, mesh, sol, ind = solved
    params, layout = case.params, sol.layout
    K = np.asarray(params.K)
    Kinv = np.linalg.inv(K)
    rg = params.rho_g
    want = np.zeros((mesh.nt, 5))
    fields = {t: oracles.LocalFields(mesh, layout, sol.coefficients, t) for t in layout.porous_tris}
    for t, f in fields.items():
        x, w = oracles.triangle_points(f.P)
        c = f.cb
        grad_u = np.array([[c[1], c[2]], [c[4], c[5]]])  # [comp, dir]
        gw = rg * Kinv @ grad_u
        want[t, 0] = _diam(mesh, t) ** 2 * w.sum() * (gw[1, 0] - gw[0, 1]) ** 2
        _, div = f.u_p(x)
        want[t, 1] = w @ (rg * (case.f_p(x) - div)) ** 2

    def darcy(f, x):
        u, _ = f.u_p(x)
        _, gphi = f.phi(x)
        return rg * (u @ Kinv.T + gphi)

    for e in mesh.edges_of_class(INTERIOR_POROUS):
        t1, t2 = mesh.edge_tris[e]
        x, w, L = _edge(mesh, e)
        j = darcy(fields[t1], x) - darcy(fields[t2], x)
        n = oracles.global_normal(mesh, e)
        val = w @ (j[:, 0] * n[1] - j[:, 1] * n[0]) ** 2
        want[[t1, t2], 2] += val
    h = oracles.mesh_size(mesh)
    for e in mesh.interface_edges:
        t1, t2 = mesh.edge_tris[e]
        kf, kp = (t1, t2) if mesh.region[t1] == FLUID else (t2, t1)
        x, w, L = _edge(mesh, e)
        uf, _ = oracles.LocalFields(mesh, layout, sol.coefficients, kf).u_f(x)
        up, _ = fields[kp].u_p(x)
        jn = (uf - up) @ oracles.global_normal(mesh, e)
        want[kp, 4] += params.delta * L / h * (w @ jn**2)
    got = ind.terms[layout.porous_tris]
    ref = want[layout.porous_tris]
    for j in (0, 1, 2, 4):
        assert np.allclose(got[:, j], ref[:, j], rtol=1e-9, atol=1e-14), POROUS_TERMS[j]
    # continuous head: the jump term is round-off
    assert got[:, 3].max() <= 1e-24


def test_totals_and_splits(solved):
    _, mesh, _, ind = solved
    assert ind.theta**2 == pytest.approx(ind.terms.sum())
    assert ind.theta_f_sq.sum() + ind.theta_p_sq.sum() == pytest.approx(ind.theta**2)
    assert np.all(ind.theta_f_sq[mesh.region == POROUS] == 0)
    totals = ind.term_totals()
    assert set(totals) == set(FLUID_TERMS) | set(POROUS_TERMS)
    assert sum(totals.values()) == pytest.approx(ind.theta**2)


def test_options_change_only_their_terms(solved):
    case, mesh, sol, ind = solved
    scaled = estimate(sol, case.params, case.f_f, case.f_p, EstimatorOptions(scaled_tangential_jump=True))
    po = sol.layout.porous_tris
    assert np.all(scaled.terms[po, 2] < ind.terms[po, 2] + 1e-30)
    assert np.array_equal(scaled.terms[:, [0, 1, 3, 4]], ind.terms[:, [0, 1, 3, 4]])
    bnd = estimate(sol, case.params, case.f_f, case.f_p, EstimatorOptions(head_jump_boundary=True))
    assert bnd.terms[po, 3].sum() > ind.terms[po, 3].sum()


def test_projection_and_oscillation_vanish_for_projectable_data():
    mesh = bisect(build_rectangle_benchmark(2, 4), [0, 7])
    params = get_case("polynomial").params
    f_f = lambda x: np.broadcast_to([1.5, -2.0], x.shape).copy()  # noqa: E731
    f_p = lambda x: 3.0 * x[..., 0] - x[..., 1] + 0.5  # noqa: E731
    proj = DataProjection.build(mesh, f_f, f_p)
    zeta_sq, zeta = compute_oscillation(mesh, params, f_f, f_p, proj)
    assert zeta <= 1e-13
    po = np.flatnonzero(mesh.region == POROUS)
    nodal = f_p(mesh.vertices[mesh.triangles[po]])
    assert np.allclose(proj.f_ph[po], nodal, atol=1e-13)


def test_oscillation_matches_oracle():
    mesh = build_rectangle_benchmark(4, 4)
    case = get_case("polynomial")
    zeta_sq, _ = compute_oscillation(mesh, case.params, case.f_f, case.f_p)
    for t in range(mesh.nt):
        P = mesh.vertices[mesh.triangles[t]]
        x, w = oracles.triangle_points(P, 12)
        if mesh.region[t] == FLUID:
            f = case.f_f(x)
            d = f - (w @ f) / w.sum()
            want = _diam(mesh, t) ** 2 * (w @ (d**2).sum(1))
        else:
            lam, _ = oracles.barycentric(P, x)
            M = lam.T @ (w[:, None] * lam)
            c = np.linalg.solve(M, lam.T @ (w * case.f_p(x)))
            want = case.params.rho_g**2 * (w @ (case.f_p(x) - lam @ c) ** 2)
        assert zeta_sq[t] == pytest.approx(want, rel=1e-7, abs=1e-20)


def test_h_norm_properties(solved):
    case, mesh, sol, _ = solved
    exact = AnalyticFields.from_case(case)
    e = compute_h_norm(sol, exact)
    assert e.total**2 == pytest.approx(sum(e.contributions.values()))
    assert compute_h_norm(sol, sol).total == 0.0
    assert compute_h_norm(exact, exact, mesh=mesh).total == 0.0
    assert compute_h_norm(sol).total == pytest.approx(compute_h_norm(None, sol).total)
    with pytest.raises(ValueError):
        compute_h_norm(exact)
    other = solve(Problem.from_case(case).assemble(build_rectangle_benchmark(4, 4)))
    with pytest.raises(MeshMismatchError):
        compute_h_norm(sol, other)


def test_estimator_localizes_the_layer():
    case = get_case("layer")
    mesh = build_rectangle_benchmark(8, 8)
    sol = solve(Problem.from_case(case).assemble(mesh))
    ind = estimate(sol, case.params, case.f_f, case.f_p)
    top = np.argsort(ind.theta_sq)[::-1][:8]
    yc = mesh.centroids[top, 1]
    assert np.all(np.abs(yc - 0.5) < 0.15)


def test_linear_case_indicator_vanishes():
    case = get_case("linear")
    mesh = bisect(build_rectangle_benchmark(4, 4), [2, 30])
    problem = Problem.from_case(case, dataclasses.replace(case.params, delta=3.0))
    sol = solve(problem.assemble(mesh))
    ind = estimate(sol, problem.params, case.f_f, case.f_p)
    assert ind.theta <= 1e-10 and ind.zeta <= 1e-12


def _zero_solution(mesh):
    layout = build_dof_layout(mesh)
    return DiscreteSolution(np.zeros(layout.ndof), layout)


def test_zero_everything_gives_zero():
    mesh = build_rectangle_benchmark(4, 4)
    ind = estimate(_zero_solution(mesh), get_case("polynomial").params)
    assert ind.theta == 0.0 and ind.zeta == 0.0


def test_pressure_gradient_cancels_constant_load():
    mesh = build_rectangle_benchmark(4, 4)
    layout = build_dof_layout(mesh)
    x = interpolate(layout, p=lambda pt: pt[..., 0])
    sol = DiscreteSolution(x, layout)
    f_f = lambda pt: np.broadcast_to([1.0, 0.0], pt.shape).copy()  # noqa: E731
    ind = estimate(sol, PhysicalParams(), f_f)
    assert np.abs(ind.terms[layout.fluid_tris, 0]).max() <= 1e-28


def test_exact_darcy_law_has_no_curl_or_tangential_jump():
    mesh = bisect(build_rectangle_benchmark(4, 4), [0, 9])
    layout = build_dof_layout(mesh)
    x = interpolate(layout, u_p=lambda pt: np.stack([np.ones(pt.shape[:-1]), np.zeros(pt.shape[:-1])], -1),
                    phi=lambda pt: -pt[..., 0])
    ind = estimate(DiscreteSolution(x, layout), PhysicalParams())
    po = layout.porous_tris
    assert np.abs(ind.terms[po, 0]).max() <= 1e-26
    assert np.abs(ind.terms[po, 2]).max() <= 1e-26


def test_sine_oscillation_matches_oracle():
    mesh = build_rectangle_benchmark(4, 4)
    f_f = lambda x: np.stack([np.sin(np.pi * x[..., 0]), 0 * x[..., 0]], -1)  # noqa: E731
    zeta_sq, zeta = compute_oscillation(mesh, PhysicalParams(), f_f)
    want = 0.0
    for t in np.flatnonzero(mesh.region == FLUID):
        x, w = oracles.triangle_points(mesh.vertices[mesh.triangles[t]], 12)
        f = f_f(x)
        want += _diam(mesh, t) ** 2 * (w @ ((f - (w @ f) / w.sum()) ** 2).sum(1))
    assert zeta == pytest.approx(np.sqrt(want), rel=1e-8)


def test_projection_is_orthogonal_to_linears():
    mesh = build_rectangle_benchmark(4, 4)
    # degree 10 quadrature is exact for this data, so orthogonality is sharp
    f_p = lambda x: x[..., 0] ** 4 * x[..., 1] ** 3 - 2 * x[..., 1] ** 5  # noqa: E731
    proj = DataProjection.build(mesh, None, f_p)
    for t in np.flatnonzero(mesh.region == POROUS):
        P = mesh.vertices[mesh.triangles[t]]
        x, w = oracles.triangle_points(P, 14)
        lam, _ = oracles.barycentric(P, x)
        r = f_p(x) - lam @ proj.f_ph[t]
        assert np.abs(lam.T @ (w * r)).max() <= 1e-12 * np.abs(lam.T @ (w * f_p(x))).max()


def test_theta_decreases_under_uniform_refinement():
    case = get_case("polynomial")
    problem = Problem.from_case(case)
    mesh, thetas = build_rectangle_benchmark(4, 4), []
    for _ in range(3):
        sol = solve(problem.assemble(mesh))
        thetas.append(estimate(sol, case.params, case.f_f, case.f_p).theta)
        mesh = refine_uniform(mesh)
    assert all(b < 0.9 * a for a, b in zip(thetas, thetas[1:]))


def test_norm_of_exact_solution_matches_closed_form():
    case = get_case("polynomial")
    e = case.expr
    X, Y = sy.symbols("x y", real=True)
    u, p, up, phi = e["u_f"], e["p"], e["u_p"], e["phi"]
    fluid = sum(c**2 for c in u) + sum(sy.diff(c, v) ** 2 for c in u for v in (X, Y)) + p**2
    div = sy.diff(up[0], X) + sy.diff(up[1], Y)
    porous = sum(c**2 for c in up) + div**2 + phi**2
    total = sy.integrate(sy.expand(fluid), (X, 0, 1), (Y, sy.Rational(1, 2), 1)) + sy.integrate(
        sy.expand(porous), (X, 0, 1), (Y, 0, sy.Rational(1, 2))
    )
    exact = float(sy.sqrt(total))
    mesh = build_rectangle_benchmark(4, 4)
    got = compute_h_norm(AnalyticFields.from_case(case), mesh=mesh, degree=16)
    assert got.interface <= 1e-28  # cd1 holds exactly
    assert got.total == pytest.approx(exact, rel=1e-10)


def test_norm_homogeneity(solved):
    _, _, sol, _ = solved
    twice = DiscreteSolution(2 * sol.coefficients, sol.layout)
    assert compute_h_norm(twice).total == pytest.approx(2 * compute_h_norm(sol).total, rel=1e-12)
