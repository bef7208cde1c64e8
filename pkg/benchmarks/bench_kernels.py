"""Compiled vs numpy collocation kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times ``assemble`` and ``evaluate`` on random periodic profiles for a few
mesh sizes, then one full Newton solve of a periodic orbit with each backend
swapped in. Prints a table of best-of-``repeat`` wall times and speed-ups.
"""
import argparse
import time

import numpy as np

from sddebif import _kernels
from sddebif.linstab import hopf_theta_at_beta
from sddebif.orbit import DEGREE, GAUSS, LAGRANGE, hopf_initial_guess, solve_po


def profile(N, seed=0):
    rng = np.random.default_rng(seed)
    mesh = np.unique(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, N - 1)]))
    h = np.diff(mesh)
    nodes = (mesh[:-1, None] + h[:, None] * np.linspace(0, 1, DEGREE + 1)[None, :DEGREE]).ravel()
    nodes = np.append(nodes, 1.0)
    return mesh, 0.4 * np.cos(2 * np.pi * nodes)


def best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    be = _kernels.backends()
    if "cython" not in be:
        print("compiled backend not built; only the numpy fallback is available")
    names = sorted(be)
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n in names) + f"{'speed-up':>10}")

    def row(label, timings):
        speed = timings["python"] / timings["cython"] if "cython" in timings else float("nan")
        print(f"{label:<22}" + "".join(f"{timings[n] * 1e3:>10.2f}ms" for n in names) + f"{speed:>9.1f}x")

    for N in (50, 200, 800):
        mesh, xn = profile(N)
        s = np.linspace(0, 1, 20 * N)
        row(f"assemble N={N}", {n: best(lambda m=be[n]: m.assemble(
            mesh, xn, DEGREE, GAUSS, LAGRANGE, 8.0, -0.1, -1.7, 0.2), args.repeat) for n in names})
        row(f"evaluate N={N}", {n: best(lambda m=be[n]: m.evaluate(
            mesh, xn, DEGREE, s, 0, LAGRANGE), args.repeat) for n in names})

    params, guess = hopf_initial_guess(hopf_theta_at_beta(-2.0), 0.2)
    saved = _kernels._impl
    timings = {}
    try:
        for n in names:
            _kernels._impl = be[n]
            timings[n] = best(lambda: solve_po(params, guess, phase="pin"), max(1, args.repeat // 2))
    finally:
        _kernels._impl = saved
    row("solve_po (end to end)", timings)


if __name__ == "__main__":
    main()
