"""Spot-check the knapsack solver against exhaustive search on random instances.

    python scripts/knapsack_check.py [--n 2000] [--seed 0]
"""
import argparse
import itertools

import numpy as np

from iparts.dynamics import knapsack_select


def exhaustive(w, v, cap):
    best = 0.0
    for r in range(len(w) + 1):
        for c in itertools.combinations(range(len(w)), r):
            if sum(w[i] for i in c) <= cap:
                best = max(best, sum(max(v[i], 0.0) for i in c))
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    bad = 0
    for _ in range(args.n):
        k = int(rng.integers(0, 12))
        w = rng.integers(1, 40, size=k)
        v = rng.normal(3.0, 3.0, size=k)
        cap = int(rng.integers(0, 120))
        got = knapsack_select(range(k), w, v, cap, prices_in_cents=True)
        bad += abs(sum(v[i] for i in got) - exhaustive(w, v, cap)) > 1e-9
    print(f"{args.n} instances, {bad} mismatches")


if __name__ == "__main__":
    main()
