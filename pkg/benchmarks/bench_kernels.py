"""Timing comparison of the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from levolve import _kernels_py

try:
    from levolve import _core
except ImportError:
    _core = None


def clock(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, pure_s, comp_s):
    speedup = "" if comp_s is None else f"{pure_s / comp_s:7.1f}x"
    comp = "   (not built)" if comp_s is None else f"{comp_s * 1e3:10.3f} ms"
    print(f"{name:<28} {pure_s * 1e3:10.3f} ms {comp} {speedup}")


def main():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'pure':>13} {'compiled':>13}  speedup")

    # diffusion stepping: 30k steps on a 64-node mesh (one tau-unit evolution)
    n = 64
    u = rng.uniform(0.5, 1.5, n)
    kappa = rng.uniform(0.5, 2.0, n)
    w = rng.uniform(0.5, 2.0, n)
    args = (u, 1.0, 1e-4, 30_000, kappa, w, 1, 1.0, 0.0)
    pure = clock(_kernels_py.rk2_diffusion, *args, repeat=2)
    comp = clock(_core.rk2_diffusion, *args, repeat=2) if _core else None
    row("rk2_diffusion (30k steps)", pure, comp)

    # batched curve action/gradient: a 64x64 cost-matrix sized batch
    theta = rng.normal(size=(3 * 4096, 48)).cumsum(axis=1)
    gbar = rng.uniform(1.0, 3.0, 47)
    pure = clock(_kernels_py.kinetic_action_grad, theta, gbar, 47.0)
    comp = clock(_core.kinetic_action_grad, theta, gbar, 47.0) if _core else None
    row("action_grad (12288 x 48)", pure, comp)

    # batched tridiagonal solves of the same shape
    rhs = rng.normal(size=(3 * 4096, 46))
    f_pure = _kernels_py.thomas_factor(gbar, 47.0)
    pure = clock(_kernels_py.thomas_solve, f_pure, rhs)
    comp = clock(_core.thomas_solve, _core.thomas_factor(gbar, 47.0), rhs) if _core else None
    row("thomas_solve (12288 x 46)", pure, comp)

    # small-batch solve, the single-geodesic call pattern
    theta_s = rng.normal(size=(3, 1281)).cumsum(axis=1)
    gbar_s = rng.uniform(1.0, 3.0, 1280)
    pure = clock(_kernels_py.kinetic_action_grad, theta_s, gbar_s, 1280.0)
    comp = clock(_core.kinetic_action_grad, theta_s, gbar_s, 1280.0) if _core else None
    row("action_grad (3 x 1281)", pure, comp)

    rhs_s = rng.normal(size=(3, 1279))
    fp = _kernels_py.thomas_factor(gbar_s, 1280.0)
    pure = clock(_kernels_py.thomas_solve, fp, rhs_s)
    comp = clock(_core.thomas_solve, _core.thomas_factor(gbar_s, 1280.0), rhs_s) if _core else None
    row("thomas_solve (3 x 1279)", pure, comp)


if __name__ == "__main__":
    main()
