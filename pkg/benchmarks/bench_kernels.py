"""Time the numba and numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 100000]

Each kernel is called once to trigger compilation, then timed as the best of
``--repeat`` runs.  Results are checked for agreement before timing.

Run with numba importable; the numpy columns use the fallback path that
SDASMOOTH_DISABLE_NUMBA=1 selects.
"""
import argparse
import time

import numpy as np

from sdasmooth import _kernels
from sdasmooth.population import objective_population
from sdasmooth.smoother import SmootherConfig, WeightedPoints, fit_values
from sdasmooth.solver import solve
from sdasmooth.synth import default_scenario, sample
from sdasmooth.trajectory import penalty_band


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def with_path(use_numba, fn):
    def run():
        saved = _kernels.USE_NUMBA
        _kernels.USE_NUMBA = use_numba
        try:
            return fn()
        finally:
            _kernels.USE_NUMBA = saved
    return run


def cases(n):
    rng = np.random.default_rng(0)
    model = default_scenario()
    data, _ = sample(model, n, 0)
    values = model.truth.values
    ab = penalty_band(201, 2) * 1e-3
    ab[0] += 1.0
    rhs = rng.standard_normal((201, 4))
    cfg = SmootherConfig()
    pts = WeightedPoints(data.times, data.targets)
    small, _ = sample(model, 4096, 1)
    return {
        "banded_cholesky_solve (m=201, 4 rhs)": (
            lambda: _kernels.banded_cholesky_solve_numba(ab, rhs),
            lambda: _kernels.banded_cholesky_solve_numpy(ab, rhs)),
        f"interp_gram (n={n})": (
            lambda: _kernels.interp_gram_numba(data.times, data.targets, 201),
            lambda: _kernels.interp_gram_numpy(data.times, data.targets, 201)),
        f"assign_nearest (k=2, n={n})": (
            lambda: _kernels.assign_numba(values, data.times, data.targets),
            lambda: _kernels.assign_numpy(values, data.times, data.targets)),
        f"fit_values (n={n})": (
            with_path(True, lambda: fit_values(pts, n, cfg)),
            with_path(False, lambda: fit_values(pts, n, cfg))),
        "solve (n=4096, 5 restarts)": (
            with_path(True, lambda: solve(small, 2, cfg)),
            with_path(False, lambda: solve(small, 2, cfg))),
        "objective_population (default scenario)": (
            with_path(True, lambda: objective_population(model.truth, model)),
            with_path(False, lambda: objective_population(model.truth, model))),
    }


def agree(a, b):
    # loose enough for summation-order differences over ~1e5 accumulated points
    if isinstance(a, tuple) and hasattr(a[0], "values"):  # (TrajectorySet, SolveReport)
        a, b = a[0].values, b[0].values
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-8, atol=1e-9)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--n", type=int, default=100_000)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'kernel':<42} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  agree")
    for name, (fast, slow) in cases(args.n).items():
        ok = agree(fast(), slow())
        tf = best_of(fast, args.repeat)
        ts = best_of(slow, args.repeat)
        print(f"{name:<42} {1e3 * tf:>10.3f} {1e3 * ts:>10.3f} {ts / tf:>7.1f}x  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
