import numpy as np
import pytest
import sympy as sy
from scipy.integrate import dblquad

import oracles
from stokes_darcy.manufactured import (
    CaseViolation,
    ManufacturedCase,
    X,
    Y,
    case_names,
    exact_error,
    get_case,
    smooth_cases,
    solve_case,
    verify_case,
)
from stokes_darcy.mesh import build_rectangle_benchmark


@pytest.mark.parametrize("name", ["zero", "linear", "polynomial", "anisotropic", "layer"])
def test_shipped_cases_satisfy_pdes_and_interface_conditions(name):
    report = verify_case(get_case(name))
    assert set(report) == {"momentum", "incompressibility", "darcy", "mass", "cd1", "cd2", "cd3"}
    assert max(report.values()) <= 1e-10


def test_registry():
    assert case_names() == ["zero", "linear", "polynomial", "anisotropic", "layer"]
    assert smooth_cases() == ["polynomial", "anisotropic"]
    assert get_case("polynomial") is get_case("polynomial")
    with pytest.raises(KeyError):
        get_case("nope")


def test_broken_case_reports_condition():
    # zero velocity with a head that does not match the pressure on the interface
    z = sy.Integer(0)
    case = ManufacturedCase.from_expressions("bad", 1, 1, sy.eye(2), 1, [z, z], z, 1 + X)
    with pytest.raises(CaseViolation) as exc:
        verify_case(case)
    assert exc.value.condition == "cd2"


def test_slip_condition_checked():
    z = sy.Integer(0)
    case = ManufacturedCase.from_expressions("slip", 1, 1, sy.eye(2), 1, [Y, z], z, z)
    with pytest.raises(CaseViolation) as exc:
        verify_case(case)
    assert exc.value.condition == "cd3"


def test_derived_data_match_finite_differences():
    case = get_case("anisotropic")
    pts = np.array([[0.3, 0.2], [0.7, 0.1]])
    eps = 1e-5
    e = np.eye(2) * eps
    dphi = np.stack([(case.phi(pts + e[i]) - case.phi(pts - e[i])) / (2 * eps) for i in range(2)], -1)
    assert np.allclose(case.u_p(pts), -dphi @ np.asarray(case.K).T, atol=1e-8)
    div = sum((case.u_p(pts + e[i])[:, i] - case.u_p(pts - e[i])[:, i]) / (2 * eps) for i in range(2))
    assert np.allclose(div, case.f_p(pts), atol=1e-6)


def test_zero_case_gives_zero_solution():
    _, sol = solve_case(get_case("zero"), build_rectangle_benchmark(4, 4))
    assert np.abs(sol.coefficients).max() == 0.0


def test_error_matches_independent_norm():
    case = get_case("polynomial")
    mesh = build_rectangle_benchmark(4, 4)
    system, sol = solve_case(case, mesh)
    got = exact_error(sol, case, h_norm_degree=10).total
    want = oracles.h_norm(mesh, system.layout, sol.coefficients, case)
    assert got == pytest.approx(want, rel=1e-8)


def test_pressure_level_matches_exact_mean():
    case = get_case("polynomial")
    mesh = build_rectangle_benchmark(4, 4)
    system, sol = solve_case(case, mesh)
    exact, _ = dblquad(
        lambda y, x: float(case.p(np.array([x, y]))), 0, 1, 0.5, 1, epsabs=1e-12)
    assert system.mean_target == pytest.approx(exact, abs=1e-10)
