"""Command-line entry point: ``iparts simulate|attack|verify|gen-scenario``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .market import ConfigError, TraceError, generate_scenario, ingest_trace

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iparts", description="Two-stage crowdsensing recruitment simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run variants over seeds and market sizes")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out")
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--seed-offset", type=int, default=0)

    att = sub.add_parser("attack", help="privacy metrics against snapshot count")
    att.add_argument("--config", required=True)
    att.add_argument("--out")
    att.add_argument("--seed-offset", type=int, default=0)

    ver = sub.add_parser("verify", help="re-audit stored profiles of a simulate run")
    ver.add_argument("run_dir")

    gen = sub.add_parser("gen-scenario", help="write one scenario as JSON")
    gen.add_argument("--config")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--seed-offset", type=int, default=0)
    gen.add_argument("--trace", help="trace CSV to derive costs, qualities and arrival rates")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    return cfg.with_seed_offset(args.seed_offset) if args.seed_offset else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from . import harness

    try:
        if args.command == "simulate":
            if args.jobs < 1:
                print("iparts: --jobs must be at least 1", file=sys.stderr)
                return EXIT_USAGE
            cfg = _config(args)
            out = args.out or cfg.output_dir
            rows, failures = harness.simulate(cfg, out, jobs=args.jobs)
            print(f"wrote {len(rows)} ledger rows to {Path(out) / 'ledger.csv'}")
            if failures:
                print(f"{len(failures)} run(s) failed:", file=sys.stderr)
                for f in failures:
                    print(f"  {f}", file=sys.stderr)
                return EXIT_RUNTIME
            return EXIT_OK
        if args.command == "attack":
            cfg = _config(args)
            out = args.out or cfg.output_dir
            rows = harness.attack(cfg, out)
            print(f"wrote {len(rows)} rows to {Path(out) / 'attack.csv'}")
            return EXIT_OK
        if args.command == "verify":
            results = harness.verify_run_dir(args.run_dir)
            bad = 0
            for name, ok, notes in results:
                print(f"{'PASS' if ok else 'FAIL'} {name}")
                for n in notes:
                    print(f"    {n}")
                bad += not ok
            print(f"{len(results) - bad}/{len(results)} runs passed")
            return EXIT_OK if bad == 0 else EXIT_RUNTIME
        if args.command == "gen-scenario":
            cfg = _config(args)
            seed = args.seed + args.seed_offset
            if args.trace:
                sc = ingest_trace(args.trace, cfg.scenario, seed)
            else:
                sc = generate_scenario(cfg.scenario, seed)
            Path(args.out).write_text(sc.to_json() + "\n", encoding="utf-8")
            print(f"wrote scenario ({sc.n_tasks} tasks, {sc.n_workers} workers) to {args.out}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"iparts: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceError) as exc:
        print(f"iparts: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
