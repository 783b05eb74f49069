"""Seeded sweeps: run variants, compute ledger rows, write and re-verify artifacts."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import RunArtifacts, get_variant, planning_reports, run_variant
from .config import ExperimentConfig, config_to_dict, parse_config
from .market import generate_scenario, sample_arrivals
from .metrics import (LEDGER_COLUMNS, audit_ir_and_risk, interaction_metrics, link_tables,
                      privacy_metrics, summarize, welfare_metrics)
from .offline_game import ContractProfile, OfflineGame, verify_ne
from .online_game import OnlineGame, realize_execution, verify_ne_online
from .privacy import calibrate_workers
from .quality import pref_risk

SUMMARY_KEYS = ["SW", "TU", "WU", "TCR", "SW_disc", "TCR_disc", "NI", "IL_ms", "IEC_mJ",
                "OeIE", "OSR", "MFL", "MSR"]
LOG_COLUMNS = ["stage", "round", "task_id", "worker_id", "direction", "bytes"]


def run_name(variant: str, n_workers: int, seed: int) -> str:
    return f"{variant}_w{n_workers}_s{seed}"


def ledger_row(run: RunArtifacts, cfg: ExperimentConfig) -> dict:
    v = get_variant(run.variant)
    s, orig = run.scenario, run.original
    alpha = run.arrivals.alpha
    w = welfare_metrics(s, run.profile, alpha, run.recruits, run.eps_star)
    wd = welfare_metrics(orig, run.profile, alpha, run.recruits, run.eps_star)
    inter = interaction_metrics(run.log, link_tables(orig.rng_seed, orig.n_tasks, orig.n_workers))
    T = cfg.attack.ledger_T
    priv = privacy_metrics(orig, run.eps_star, (T,), 1, run.seed, cfg.epoch_length,
                           memoize=v.memoize, perturb=v.perturb)
    audit = audit_ir_and_risk(s, run.eps_star, run.reports, run.profile, alpha, run.recruits,
                              risk_checks=v.risk_checks, seed=run.seed, M=cfg.planner.M,
                              online_checks=v.online)
    game_q = []
    if any(run.profile.sets):
        g = OfflineGame(s, run.reports, run.eps_star, cfg.planner, run.seed)
        game_q = [g.qrisk_mc(i, a) for i, a in enumerate(run.profile.sets) if a]
    x = run.profile.assignment(s.n_workers)
    prisk = [pref_risk(x[:, j], s.intent_prior[:, j], s.n_tasks) for j in range(s.n_workers)]
    # online recruits are not risk-screened; record their effect for inspection only
    for i, a in run.recruits.items():
        x[i, sorted(a)] = 1
    post = [pref_risk(x[:, j], s.intent_prior[:, j], s.n_tasks) for j in range(s.n_workers)]
    off, on = run.offline, run.online
    return {
        "algorithm": run.variant,
        "seed": run.seed,
        "n_tasks": s.n_tasks,
        "n_workers": s.n_workers,
        "SW": w["SW"], "TU": w["TU"], "WU": w["WU"], "TCR": w["TCR"],
        "SW_disc": wd["SW"], "TCR_disc": wd["TCR"],
        **inter,
        "OeIE": priv["OeIE"], "OSR": priv["OSR"], "MFL": priv["MFL"][0], "MSR": priv["MSR"][0],
        "qrisk_max": max(game_q) if game_q else 0.0,
        "prisk_max": max(prisk) if prisk else 0.0,
        "prisk_post": max(post) if post else 0.0,
        "unfilled": sum(1 for a in run.profile.sets if not a),
        "still_unmet": len(on.still_unmet) if on else len(run.state.unmet_tasks),
        "off_rounds": off.rounds if off else 0,
        "off_converged": int(off.converged) if off else 1,
        "on_rounds": on.rounds if on else 0,
        "on_converged": int(on.converged) if on else 1,
        "violations": len(audit.violations),
    }


def profile_doc(run: RunArtifacts) -> dict:
    s = run.scenario
    return {
        "variant": run.variant,
        "seed": run.seed,
        "n_workers": s.n_workers,
        "contracts": run.profile.to_lists(),
        "reserved_budget": [float(s.payments[i, sorted(a)].sum())
                            for i, a in enumerate(run.profile.sets)],
        "offline_trace": run.offline.trace if run.offline else [],
        "recruits": {str(i): sorted(a) for i, a in sorted(run.recruits.items())},
        "online_trace": run.online.trace if run.online else [],
        "unmet_after_arrival": sorted(run.state.unmet_tasks),
    }


def execute(cfg_doc: dict, variant: str, seed: int, n_workers: int) -> dict:
    """One (variant, seed, market size) run; picklable for process pools."""
    return execute_group(cfg_doc, (variant,), seed, n_workers)[variant]


def execute_group(cfg_doc: dict, variants, seed: int, n_workers: int) -> dict:
    """All variants on one scenario, sharing calibration and identical offline plans."""
    cfg = parse_config(cfg_doc)
    scenario = generate_scenario(replace(cfg.scenario, n_workers=n_workers), seed)
    shared: dict = {}
    out = {}
    for variant in variants:
        run = run_variant(variant, scenario, cfg.caps, cfg.planner, seed, cfg.epoch_length,
                          cfg.step, shared=shared)
        out[variant] = {
            "row": ledger_row(run, cfg),
            "profile": profile_doc(run),
            "log": [list(r) for r in run.log],
            "runtime_s": run.runtime_s,
        }
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path: Path, columns, rows, stamp: bool = False) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if stamp:
            fh.write(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def simulate(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> tuple[list[dict], list[str]]:
    """Run every (variant, market size, seed) and write the result tree."""
    out = Path(out_dir)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    doc = config_to_dict(cfg)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    jobs_list = [(v, s, m) for v in cfg.variants for m in cfg.counts() for s in cfg.seeds]
    groups = [(s, m) for m in cfg.counts() for s in cfg.seeds]
    variants = tuple(cfg.variants)
    results: dict[tuple, dict] = {}
    failures: list[str] = []

    def _collect(group, res):
        for v, r in res.items():
            results[(v, *group)] = r

    def _fail(group, exc):
        for v in variants:
            failures.append(f"{run_name(v, group[1], group[0])}: {exc}")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {g: pool.submit(execute_group, doc, variants, *g) for g in groups}
            for g, f in futs.items():
                try:
                    _collect(g, f.result())
                except Exception as exc:  # reported, not raised: other runs still count
                    _fail(g, exc)
    else:
        for g in groups:
            try:
                _collect(g, execute_group(doc, variants, *g))
            except Exception as exc:
                _fail(g, exc)
    rows, diag = [], []
    for key in jobs_list:
        if key not in results:
            continue
        r = results[key]
        name = run_name(key[0], key[2], key[1])
        rows.append(r["row"])
        diag.append({"algorithm": key[0], "seed": key[1], "n_workers": key[2],
                     "runtime_s": r["runtime_s"]})
        (out / "profiles" / f"{name}.json").write_text(
            json.dumps(r["profile"], sort_keys=True) + "\n")
        write_csv(out / "logs" / f"{name}.csv", LOG_COLUMNS,
                  [dict(zip(LOG_COLUMNS, row)) for row in r["log"]])
    write_csv(out / "ledger.csv", LEDGER_COLUMNS, rows, stamp=True)
    summ = summarize(rows, SUMMARY_KEYS)
    if summ:
        write_csv(out / "summary.csv", list(summ[0]), summ, stamp=True)
    write_csv(out / "diagnostics.csv", ["algorithm", "seed", "n_workers", "runtime_s"], diag)
    return rows, failures


def attack(cfg: ExperimentConfig, out_dir) -> list[dict]:
    """Privacy metrics against snapshot count for each configured variant and seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    att = cfg.attack
    rows = []
    for variant in att.variants:
        v = get_variant(variant)
        for seed in cfg.seeds:
            scenario = generate_scenario(cfg.scenario, seed)
            if att.eps is None:
                eps = calibrate_workers(scenario, cfg.caps, cfg.step)
            else:
                eps = np.full(scenario.n_workers, float(att.eps))
            res = privacy_metrics(scenario, eps, att.T_grid, att.replications, seed,
                                  cfg.epoch_length, memoize=v.memoize, perturb=v.perturb,
                                  attacker=att.attacker)
            for k, T in enumerate(res["T"]):
                rows.append({
                    "algorithm": variant, "seed": seed, "T": T,
                    "OeIE": res["OeIE"], "OSR": res["OSR"], "OSR_se": res["OSR_se"],
                    "MFL": res["MFL"][k], "MFL_se": res["MFL_se"][k],
                    "MSR": res["MSR"][k], "MSR_se": res["MSR_se"][k],
                })
    cols = ["algorithm", "seed", "T", "OeIE", "OSR", "OSR_se", "MFL", "MFL_se", "MSR", "MSR_se"]
    write_csv(out / "attack.csv", cols, rows, stamp=True)
    return rows


def verify_run_dir(run_dir) -> list[tuple[str, bool, list[str]]]:
    """Replay audits and equilibrium checks on stored profiles."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    prof_dir = run_dir / "profiles"
    if not cfg_path.is_file() or not prof_dir.is_dir():
        raise FileNotFoundError(f"{run_dir}: missing config.json or profiles/")
    cfg = parse_config(json.loads(cfg_path.read_text()))
    results = []
    for path in sorted(prof_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        variant = get_variant(doc["variant"])
        seed = int(doc["seed"])
        scenario = generate_scenario(replace(cfg.scenario, n_workers=int(doc["n_workers"])), seed)
        eps = calibrate_workers(scenario, cfg.caps, cfg.step)
        reports = planning_reports(scenario, eps, variant, seed, cfg.epoch_length)
        plan = scenario.with_redundancy(0.0) if variant.linear_quality else scenario
        profile = ContractProfile.from_lists(doc["contracts"])
        recruits = {int(i): frozenset(a) for i, a in doc["recruits"].items()}
        arrivals = sample_arrivals(scenario, 0)
        notes = []
        audit = audit_ir_and_risk(plan, eps, reports, profile, arrivals.alpha, recruits,
                                  risk_checks=variant.risk_checks, seed=seed, M=cfg.planner.M,
                                  online_checks=variant.online)
        for viol in audit.violations:
            notes.append(f"{viol[0]} violation at {viol[1]} {viol[2]}")
        if variant.offline and not variant.greedy:
            if not audit.ok:
                notes.append("offline equilibrium check skipped: profile infeasible")
            else:
                ne = verify_ne(OfflineGame(plan, reports, eps, cfg.planner, seed), profile)
                if not ne.ok:
                    notes.append("offline profile is not an equilibrium")
        if variant.online and audit.ok:
            state = realize_execution(plan, profile, arrivals)
            ne_on = verify_ne_online(OnlineGame(plan, state, reports, eps, cfg.planner), recruits)
            if not ne_on.ok:
                notes.append("online recruitment is not an equilibrium")
        results.append((path.stem, not notes, notes))
    return results


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)
