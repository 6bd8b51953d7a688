import numpy as np
import pytest

from stokes_darcy.adaptivity import AdaptConfig, AdaptError, AdaptHistory, AdaptRecord, Problem, adapt_loop, mark
from stokes_darcy.assembly import PhysicalParams
from stokes_darcy.manufactured import get_case
from stokes_darcy.mesh import build_rectangle_benchmark


def brute_force_mark(eta, theta):
    """Smallest prefix of the (value desc, id asc) order reaching theta * total."""
    order = sorted(range(len(eta)), key=lambda k: (-eta[k], k))
    total, acc, out = sum(eta), 0.0, []
    for k in order:
        out.append(k)
        acc += eta[k]
        if acc >= theta * total:
            break
    return sorted(out)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("theta", [0.1, 0.5, 0.9, 1.0])
def test_mark_matches_brute_force(seed, theta):
    rng = np.random.default_rng(seed)
    eta = rng.integers(0, 5, size=40).astype(float)  # many ties
    assert mark(eta, theta).tolist() == brute_force_mark(eta.tolist(), theta)


def test_mark_edge_cases():
    assert mark(np.zeros(5), 0.5).size == 0
    assert mark(np.zeros(0), 0.5).size == 0
    assert mark(np.array([0.0, 3.0, 1.0]), 1e-9).tolist() == [1]
    with pytest.raises(ValueError):
        mark(np.ones(3), 0.0)
    with pytest.raises(ValueError):
        mark(np.ones(3), 1.5)


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(theta=0)
    with pytest.raises(ValueError):
        AdaptConfig(max_iterations=-1)
    with pytest.raises(ValueError):
        AdaptConfig(max_dofs=0)
    with pytest.raises(ValueError):
        AdaptConfig(threshold=-1)


def test_history_rejects_decreasing_dofs():
    h = AdaptHistory()
    h.append(AdaptRecord(0, 100, 10, 1.0, 0.0, 1.0, 1.0, 3), None)
    with pytest.raises(ValueError):
        h.append(AdaptRecord(1, 90, 12, 1.0, 0.0, 1.0, 1.0, 3), None)


def test_loop_stops_on_iterations_and_records():
    problem = Problem.from_case(get_case("polynomial"))
    hist = adapt_loop(problem, build_rectangle_benchmark(4, 4), AdaptConfig(max_iterations=3))
    assert [r.iteration for r in hist.records] == [0, 1, 2, 3]
    ndof = hist.column("ndof")
    assert np.all(np.diff(ndof) > 0)
    assert hist.records[-1].n_marked == 0
    assert all(r.n_marked > 0 for r in hist.records[:-1])
    assert len(hist.meshes) == 4 and hist.mesh is hist.solution.mesh
    for m in hist.meshes:
        m.validate()
    eff = hist.column("effectivity")
    assert np.all(np.isfinite(eff)) and np.all(eff > 0)


def test_loop_stops_on_budget_and_threshold():
    problem = Problem.from_case(get_case("polynomial"))
    mesh = build_rectangle_benchmark(4, 4)
    hist = adapt_loop(problem, mesh, AdaptConfig(max_iterations=10, max_dofs=300))
    assert hist.records[-1].ndof >= 300 and hist.records[-2].ndof < 300
    hist = adapt_loop(problem, mesh, AdaptConfig(max_iterations=10, threshold=1e3))
    assert len(hist.records) == 1


def test_loop_on_exact_case_stops_immediately():
    problem = Problem.from_case(get_case("linear"))
    hist = adapt_loop(problem, build_rectangle_benchmark(4, 4), AdaptConfig(threshold=1e-9))
    assert len(hist.records) == 1 and hist.records[0].err_h_norm <= 1e-10


def test_loop_without_exact_solution():
    case = get_case("polynomial")
    problem = Problem(case.params, case.f_f, case.f_p, case.boundary_values, case.pressure_integral)
    hist = adapt_loop(problem, build_rectangle_benchmark(4, 4), AdaptConfig(max_iterations=1))
    assert np.isnan(hist.column("err_h_norm")).all()


def test_solver_failure_names_iteration():
    case = get_case("polynomial")
    params = PhysicalParams(div_penalty=0.0, darcy_penalty=0.0)
    problem = Problem(params, case.f_f, case.f_p, case.boundary_values, case.pressure_integral)
    with pytest.raises(AdaptError) as exc:
        adapt_loop(problem, build_rectangle_benchmark(4, 4))
    assert exc.value.iteration == 0
