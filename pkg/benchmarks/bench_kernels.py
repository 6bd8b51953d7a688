"""Compare the numba and numpy element kernels.

    python3 benchmarks/bench_kernels.py [--size 64] [--repeat 5]

Kernel timings call both implementations directly on arrays taken from a
benchmark mesh.  The end-to-end timing assembles the full system in a
fresh interpreter per backend, selected with STOKES_DARCY_KERNELS.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stokes_darcy import _kernels
from stokes_darcy.assembly import _tri_rule
from stokes_darcy.dofs import build_dof_layout
from stokes_darcy.elements import bdm_tables, scalar_tables
from stokes_darcy.mesh import build_rectangle_benchmark

ASSEMBLE = """
import time
from stokes_darcy import build_rectangle_benchmark, get_case
from stokes_darcy.manufactured import discretize
mesh = build_rectangle_benchmark({n}, {n})
case = get_case("polynomial")
discretize(case, build_rectangle_benchmark(2, 2))  # warm-up, includes jit compile
best = min(
    (lambda t0: (discretize(case, mesh), time.perf_counter() - t0)[1])(time.perf_counter())
    for _ in range({repeat})
)
print(best)
"""


def kernel_inputs(n):
    mesh = build_rectangle_benchmark(n, n)
    layout = build_dof_layout(mesh)
    ft, pt = layout.fluid_tris, layout.porous_tris
    ref, wf = _tri_rule(mesh, ft, 4)
    _, grads, _ = scalar_tables(mesh, ft, ref)
    _, wp = _tri_rule(mesh, pt, 4)
    vals, _ = bdm_tables(mesh, pt, ref)
    weight = np.broadcast_to(np.eye(2), (pt.size, 2, 2)).copy()
    marked = np.zeros(mesh.ne, dtype=bool)
    marked[:: max(1, mesh.ne // 50)] = True
    return {
        "sym_grad_stiffness": ((grads, wf), _kernels.sym_grad_stiffness_numpy,
                               getattr(_kernels, "_sym_grad_stiffness_jit", None)),
        "weighted_vector_mass": ((vals, weight, wp), _kernels.weighted_vector_mass_numpy,
                                 getattr(_kernels, "_weighted_vector_mass_jit", None)),
        "nvb_closure": ((mesh.tri_edges.astype(np.int64), mesh.edge_tris.astype(np.int64), marked),
                        _kernels.nvb_closure_numpy,
                        getattr(_kernels, "_nvb_closure_jit", None)),
    }, mesh


def best_of(fn, args, repeat):
    fn(*args)  # warm-up; compiles the jit variant
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def assemble_time(backend, n, repeat):
    env = dict(os.environ, STOKES_DARCY_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", ASSEMBLE.format(n=n, repeat=repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64, help="benchmark mesh NxN (N even)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-assembly", action="store_true")
    args = ap.parse_args(argv)

    inputs, mesh = kernel_inputs(args.size)
    print(f"mesh {args.size}x{args.size}: {mesh.nt} triangles, numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':24s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for name, (kargs, np_fn, jit_fn) in inputs.items():
        t_np = best_of(np_fn, kargs, args.repeat)
        if jit_fn is None:
            print(f"{name:24s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>9s}")
            continue
        t_jit = best_of(jit_fn, kargs, args.repeat)
        print(f"{name:24s} {1e3 * t_np:12.3f} {1e3 * t_jit:12.3f} {t_np / t_jit:9.2f}")
    if not args.skip_assembly:
        backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
        times = {b: assemble_time(b, args.size, args.repeat) for b in backends}
        line = "  ".join(f"{b} {1e3 * t:.1f} ms" for b, t in times.items())
        print(f"full assembly: {line}")


if __name__ == "__main__":
    main()
