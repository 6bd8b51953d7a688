import os
import subprocess
import sys

import numpy as np
import pytest

from stokes_darcy import _kernels
from stokes_darcy.mesh import build_rectangle_benchmark


@pytest.fixture
def arrays():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((50, 6, 4, 2))
    wdet = rng.random((50, 6))
    vals = rng.standard_normal((50, 6, 6, 2))
    K = rng.standard_normal((50, 2, 2))
    weight = K @ np.swapaxes(K, 1, 2) + np.eye(2)
    return grads, wdet, vals, weight


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
def test_jit_and_numpy_agree(arrays):
    grads, wdet, vals, weight = arrays
    a = _kernels._sym_grad_stiffness_jit(grads, wdet)
    b = _kernels.sym_grad_stiffness_numpy(grads, wdet)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    a = _kernels._weighted_vector_mass_jit(vals, weight, wdet)
    b = _kernels.weighted_vector_mass_numpy(vals, weight, wdet)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
def test_closure_backends_agree():
    mesh = build_rectangle_benchmark(8, 8)
    rng = np.random.default_rng(1)
    marked = np.zeros(mesh.ne, dtype=bool)
    marked[rng.choice(mesh.ne, 10, replace=False)] = True
    a = _kernels._nvb_closure_jit(mesh.tri_edges.astype(np.int64), mesh.edge_tris.astype(np.int64), marked.copy())
    b = _kernels.nvb_closure_numpy(mesh.tri_edges, mesh.edge_tris, marked.copy())
    assert np.array_equal(a, b)


def test_stiffness_is_symmetric_psd(arrays):
    grads, wdet, _, _ = arrays
    A = _kernels.sym_grad_stiffness(grads, wdet)
    assert np.allclose(A, np.swapaxes(A, 1, 2))
    assert np.linalg.eigvalsh(A).min() > -1e-10


def _run(backend, code):
    env = dict(os.environ, STOKES_DARCY_KERNELS=backend)
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


def test_env_flag_selects_backend():
    code = (
        "import numpy as np\nfrom stokes_darcy import _kernels as k, get_case, solve_case, "
        "build_rectangle_benchmark as b\n_, s = solve_case(get_case('polynomial'), b(4, 4))\n"
        "print(k.BACKEND, repr(float(s.coefficients @ np.arange(s.coefficients.size))))"
    )
    out_np = _run("numpy", code)
    assert out_np.returncode == 0, out_np.stderr
    assert out_np.stdout.split()[0] == "numpy"
    if _kernels.HAVE_NUMBA:
        out_nb = _run("numba", code)
        assert out_nb.stdout.split()[0] == "numba"
        assert float(out_nb.stdout.split()[1]) == pytest.approx(float(out_np.stdout.split()[1]), rel=1e-12)
    bad = _run("fortran", "import stokes_darcy")
    assert bad.returncode != 0 and "STOKES_DARCY_KERNELS" in bad.stderr
