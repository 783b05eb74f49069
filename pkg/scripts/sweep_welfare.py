"""Welfare, completion and overhead per variant over market sizes.

    python scripts/sweep_welfare.py [--config scripts/configs/welfare_sweep.json] [--jobs N]
"""
import argparse
import os
from pathlib import Path

from iparts.config import load_config
from iparts.harness import simulate
from iparts.metrics import summarize

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=HERE / "configs" / "welfare_sweep.json")
    ap.add_argument("--out")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    rows, failures = simulate(cfg, out, jobs=args.jobs)
    for f in failures:
        print("failed:", f)
    keys = ["SW", "TCR", "NI", "IL_ms", "SW_disc"]
    print(f"{'variant':8s} {'workers':>7s} " + " ".join(f"{k:>10s}" for k in keys))
    for rec in summarize(rows, keys):
        vals = " ".join(f"{rec[k + '_mean']:10.2f}" for k in keys)
        print(f"{rec['algorithm']:8s} {rec['n_workers']:7d} {vals}")
    print(f"ledger: {Path(out) / 'ledger.csv'}")


if __name__ == "__main__":
    main()
