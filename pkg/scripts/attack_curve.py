"""Attack success against snapshot count, with and without memoization.

    python scripts/attack_curve.py [--config scripts/configs/attack_curve.json] [--plot]
"""
import argparse
from collections import defaultdict
from pathlib import Path

import numpy as np

from iparts.config import load_config
from iparts.harness import attack

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=HERE / "configs" / "attack_curve.json")
    ap.add_argument("--out")
    ap.add_argument("--plot", action="store_true", help="save msr.png (needs matplotlib)")
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    rows = attack(cfg, out)
    curves = defaultdict(lambda: defaultdict(list))
    for r in rows:
        curves[r["algorithm"]][r["T"]].append(r["MSR"])
    for v, by_T in curves.items():
        line = "  ".join(f"T={T}:{np.mean(m):.3f}" for T, m in sorted(by_T.items()))
        print(f"{v:7s} MSR  {line}")
    if args.plot:
        import matplotlib.pyplot as plt

        for v, by_T in curves.items():
            Ts = sorted(by_T)
            plt.plot(Ts, [np.mean(by_T[T]) for T in Ts], marker="o", label=v)
        plt.xscale("log")
        plt.xlabel("snapshots T")
        plt.ylabel("multi-snapshot success rate")
        plt.legend()
        plt.savefig(out / "msr.png", dpi=120)
        print(f"plot: {out / 'msr.png'}")


if __name__ == "__main__":
    main()
