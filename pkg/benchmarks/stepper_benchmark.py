"""Benchmark the compiled trajectory stepper against the numpy fallback.

Both kernels consume identical pre-drawn uniform streams, so their jump
sequences must match exactly; this script asserts that before timing.

Run:  python benchmarks/stepper_benchmark.py
"""

import math
import time

import numpy as np

from lophase import contmeas as cm
from lophase import _stepper_py

try:
    from lophase import _stepper

    COMPILED = _stepper.run_steps
except ImportError:
    COMPILED = None


def workload(seed, n_steps, K, p_step):
    grid = cm.delta_grid(K)
    rng = np.random.default_rng(seed)
    return dict(
        sin2=np.sin(grid / 2.0) ** 2,
        cos2=np.cos(grid / 2.0) ** 2,
        p_tot=np.full(n_steps, p_step),
        u_step=rng.random(n_steps),
        u_split=rng.random(n_steps),
    )


def run(kernel, kw, K):
    weights = np.ones(K)
    steps, modes = kernel(kw["sin2"], kw["cos2"], weights, kw["p_tot"], kw["u_step"], kw["u_split"])
    return steps, modes, weights


def bench(kernel, kw, K, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(kernel, kw, K)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n_steps, K, p_step, repeats = 500_000, 1024, 4e-3, 5
    kw = workload(seed=12, n_steps=n_steps, K=K, p_step=p_step)

    py_steps, py_modes, py_w = run(_stepper_py.run_steps, kw, K)
    print(f"workload: {n_steps} steps, grid {K}, {py_steps.size} jumps")

    if COMPILED is None:
        print("compiled kernel not built; timing the fallback only")
        t = bench(_stepper_py.run_steps, kw, K, repeats)
        print(f"python   {t*1e3:9.2f} ms   {t/n_steps*1e9:8.1f} ns/step")
        return

    c_steps, c_modes, c_w = run(COMPILED, kw, K)
    assert np.array_equal(py_steps, c_steps), "jump steps differ between backends"
    assert np.array_equal(py_modes, c_modes), "jump modes differ between backends"
    assert np.allclose(py_w, c_w, rtol=1e-13, atol=0.0), "posterior weights differ"
    print("cross-check: identical jump sequences, matching posteriors")

    t_py = bench(_stepper_py.run_steps, kw, K, repeats)
    t_c = bench(COMPILED, kw, K, repeats)
    print(f"python   {t_py*1e3:9.2f} ms   {t_py/n_steps*1e9:8.1f} ns/step")
    print(f"compiled {t_c*1e3:9.2f} ms   {t_c/n_steps*1e9:8.1f} ns/step")
    print(f"speedup  {t_py/t_c:9.1f}x")


if __name__ == "__main__":
    main()
