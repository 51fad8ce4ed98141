"""Compare the compiled kernel core against the NumPy fallback.

Times the prior covariance construction (the hot kernel of map
initialization) and single-pair covariance calls on both backends, for the
full-depth map sizes used in the experiments.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from argp import _kernelcore_py
from argp.geometry import Rect
from argp.kernels import Hyperparams, integral_cov_matrix
from argp.ndtree import TreeConfig, build_uniform

try:
    from argp import _kernelcore
except ImportError:
    _kernelcore = None

HYPER = Hyperparams(0.25, 2.36)
EXTENT = Rect(0.0, 20.0, 0.0, 20.0)


def time_call(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matrix():
    print(f"{'size':>6} {'cells':>6} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for size in (16, 32, 64):
        tree = build_uniform(TreeConfig.for_leaves_per_axis(EXTENT, size))
        bounds = tree.leaf_bounds()
        t_py = time_call(lambda: integral_cov_matrix(*bounds, HYPER, core=_kernelcore_py))
        if _kernelcore is None:
            print(f"{size:>6} {tree.n_leaves:>6} {t_py * 1e3:>8.1f}ms {'n/a':>10} {'':>8}")
            continue
        t_c = time_call(lambda: integral_cov_matrix(*bounds, HYPER, core=_kernelcore))
        a = integral_cov_matrix(*bounds, HYPER, core=_kernelcore)
        b = integral_cov_matrix(*bounds, HYPER, core=_kernelcore_py)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
        print(f"{size:>6} {tree.n_leaves:>6} {t_py * 1e3:>8.1f}ms {t_c * 1e3:>8.1f}ms "
              f"{t_py / t_c:>7.1f}x")


def bench_pairs(n=20000):
    rng = np.random.default_rng(0)
    lo = rng.uniform(0, 19, (n, 4))
    args = [(x0, x0 + 0.6, y0, y0 + 0.6, x1, x1 + 0.6, y1, y1 + 0.6, 0.25, 2.36)
            for x0, y0, x1, y1 in lo]

    def run(core):
        for a in args:
            core.cov_pair(*a)

    t_py = time_call(lambda: run(_kernelcore_py), repeats=1)
    line = f"scalar pairs ({n}): python {t_py * 1e3:8.1f}ms"
    if _kernelcore is not None:
        t_c = time_call(lambda: run(_kernelcore), repeats=1)
        line += f"   compiled {t_c * 1e3:8.1f}ms   speedup {t_py / t_c:.1f}x"
    print(line)


if __name__ == "__main__":
    if _kernelcore is None:
        print("compiled core not built; showing the NumPy fallback only")
    bench_matrix()
    bench_pairs()
