"""Per-call cost of the three FTRL steps over a range of K."""

import argparse
import time

import numpy as np

from coopftrl.solvers import exp_weights, solve_hybrid, solve_tsallis


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--calls", type=int, default=2000)
    ap.add_argument("--K", type=int, nargs="*", default=[3, 10, 40, 200])
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    solve_tsallis(np.zeros(2), 1.0), solve_hybrid(np.zeros(2), 1.0, 1.0), exp_weights(np.zeros(2), 1.0)
    print(f"{'K':>5} {'tsallis us':>11} {'hybrid us':>10} {'exp us':>8}")
    for K in args.K:
        Ls = rng.uniform(0, 2000, (args.calls, K))
        cols = []
        for fn in (lambda L: solve_tsallis(L, 0.01), lambda L: solve_hybrid(L, 0.01, 0.01),
                   lambda L: exp_weights(L, 0.01)):
            start = time.perf_counter()
            for L in Ls:
                fn(L)
            cols.append(1e6 * (time.perf_counter() - start) / args.calls)
        print(f"{K:>5} {cols[0]:>11.1f} {cols[1]:>10.1f} {cols[2]:>8.1f}")


if __name__ == "__main__":
    main()
