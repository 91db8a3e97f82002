"""Compiled versus pure-Python tabular kernel.

    python benchmarks/bench_tabular.py [--steps N] [--repeats K]

Both kernels run the same seeded loop, so the script also checks that their
tables agree bit for bit before reporting timings.
"""

import argparse
import time

import numpy as np

from sdqcal import _tabular_py, tabular
from sdqcal.envs import chain_mdp, noisy_gridworld, value_iteration
from sdqcal.tabular import TabularConfig, train_tabular


def timed(spec, cfg, algo, q_star, repeats):
    best, res = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = train_tabular(spec, cfg, algo, 0, q_star=q_star)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if tabular.KERNEL != "compiled":
        raise SystemExit("compiled kernel not available; build with `pip install -e . --no-build-isolation`")
    compiled = tabular._kernel
    print(f"{'mdp':11s} {'algo':8s} {'compiled s':>11s} {'python s':>9s} {'speedup':>8s}  identical")
    for make in (chain_mdp, noisy_gridworld):
        spec = make()
        q_star = value_iteration(spec)
        cfg = TabularConfig(beta=0.019, total_steps=args.steps)
        for algo in ("Q", "DoubleQ", "SDQ_CAL"):
            tabular._kernel = compiled
            t_fast, fast = timed(spec, cfg, algo, q_star, args.repeats)
            tabular._kernel = _tabular_py
            t_slow, slow = timed(spec, cfg, algo, q_star, 1)
            tabular._kernel = compiled
            same = np.array_equal(fast.pair.qa, slow.pair.qa) and np.array_equal(fast.linf_error, slow.linf_error)
            print(f"{spec.name:11s} {algo:8s} {t_fast:11.3f} {t_slow:9.3f} {t_slow / t_fast:7.1f}x  {same}")


if __name__ == "__main__":
    main()
