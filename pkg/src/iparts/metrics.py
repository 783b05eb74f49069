"""Evaluation metrics: welfare, reliability, interaction overhead, privacy, audits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import ArrivalVector, Scenario
from .offline_game import ContractProfile, arrival_samples, contract_costs
from .online_game import realize_execution
from .privacy import (IntentState, multi_snapshot_attack, lr_threshold_attack, one_snapshot_attack,
                      one_snapshot_eie, report_sequence)
from .quality import aggregate_quality, aggregate_quality_batch, pref_risk, quality_risk
from .rng import stream

LEDGER_COLUMNS = [
    "algorithm", "seed", "n_tasks", "n_workers",
    "SW", "TU", "WU", "TCR", "SW_disc", "TCR_disc",
    "NI", "IL_ms", "IEC_mJ",
    "OeIE", "OSR", "MFL", "MSR",
    "qrisk_max", "prisk_max", "prisk_post", "unfilled", "still_unmet",
    "off_rounds", "off_converged", "on_rounds", "on_converged",
    "violations",
]

LATENCY_UP_MS = (0.5, 11.0)
LATENCY_DOWN_MS = (0.5, 4.0)
POWER_WORKER_W = (0.2, 0.4)
POWER_TASK_W = (6.0, 20.0)


def welfare_metrics(scenario: Scenario, profile: ContractProfile, alpha, recruits: dict,
                    eps_star) -> dict:
    """Realised offline welfare plus online welfare, and the completion rate.

    Payments to contracted workers count only when they arrive; online
    recruits are present by construction.
    """
    alpha = np.asarray(alpha).astype(bool)
    cost = contract_costs(scenario, eps_star)
    w3 = scenario.econ.omega3
    tu = wu = 0.0
    done = 0
    for i, a in enumerate(profile.sets):
        zeta = scenario.tasks[i].redundancy_factor
        arr = sorted(j for j in a if alpha[j])
        p = scenario.payments[i, arr]
        tu += w3 * aggregate_quality(scenario.quality[i, arr].tolist(), zeta) - float(p.sum())
        wu += float((p - cost[i, arr]).sum())
        rec = sorted(recruits.get(i, ()))
        if rec:
            pr = scenario.payments[i, rec]
            tu += w3 * aggregate_quality(scenario.quality[i, rec].tolist(), zeta) - float(pr.sum())
            wu += float((pr - cost[i, rec]).sum())
        q_fin = aggregate_quality(scenario.quality[i, arr + rec].tolist(), zeta)
        done += q_fin >= scenario.tasks[i].quality_demand
    n = scenario.n_tasks
    return {"SW": tu + wu, "TU": tu, "WU": wu, "TCR": done / n if n else 0.0}


@dataclass(frozen=True)
class LinkTables:
    t_up: np.ndarray
    t_down: np.ndarray
    e_worker: np.ndarray
    e_task: np.ndarray


def link_tables(seed: int, n_tasks: int, n_workers: int) -> LinkTables:
    """Per-pair latencies (ms) and transmit powers (W), one column stream per worker."""
    cols = []
    for j in range(n_workers):
        rng = stream(seed, "link", j)
        cols.append(np.stack([
            rng.uniform(*LATENCY_UP_MS, size=n_tasks),
            rng.uniform(*LATENCY_DOWN_MS, size=n_tasks),
            rng.uniform(*POWER_WORKER_W, size=n_tasks),
            rng.uniform(*POWER_TASK_W, size=n_tasks),
        ]))
    arr = np.stack(cols, axis=2) if cols else np.zeros((4, n_tasks, 0))
    return LinkTables(arr[0], arr[1], arr[2], arr[3])


def exchange_counts(log, n_tasks: int, n_workers: int) -> np.ndarray:
    N = np.zeros((n_tasks, n_workers), dtype=np.int64)
    for row in log:
        if row[4] == "down":
            N[row[2], row[3]] += 1
    return N


def interaction_metrics(log, tables: LinkTables) -> dict:
    """Exchange count, latency (ms) and energy (mJ) from a message log."""
    n, m = tables.t_up.shape
    N = exchange_counts(log, n, m)
    il = float(np.sum(N * (tables.t_up + tables.t_down)))
    iec = float(np.sum(N * (tables.e_task * tables.t_down + tables.e_worker * tables.t_up)))
    return {"NI": int(N.sum()), "IL_ms": il, "IEC_mJ": iec}


def _attack_stats(truth: np.ndarray, seq: np.ndarray, eps: float, prior: np.ndarray,
                  T_grid, attacker: str) -> dict:
    """Accuracy of both attackers for one worker; ``seq`` holds reports by round."""
    one = one_snapshot_attack(seq[0], prior, eps)
    out = {"osr": float(np.mean(one.estimate == truth))}
    for T in T_grid:
        if attacker == "likelihood_ratio":
            _, est = lr_threshold_attack(seq[:T], eps, prior)
            F = seq[:T].mean(axis=0)
        else:
            F, est = multi_snapshot_attack(seq[:T])
        out[T] = (float(np.mean(np.abs(F - truth))), float(np.mean(est == truth)))
    return out


def privacy_metrics(scenario: Scenario, eps_star, T_grid=(1,), replications: int = 1,
                    seed: int = 0, epoch_length: int = 10, memoize: bool = True,
                    perturb: bool = True, attacker: str = "majority") -> dict:
    """OeIE, OSR, MFL and MSR per snapshot count, with standard errors.

    Each replication draws fresh mechanism randomness; opted-out workers are
    skipped.  ``perturb=False`` models workers reporting their true intents.
    """
    T_grid = sorted(set(int(t) for t in T_grid))
    if not T_grid or T_grid[0] < 1:
        raise ValueError("snapshot counts must be at least 1")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if attacker not in ("majority", "likelihood_ratio"):
        raise ValueError(f"unknown attacker {attacker!r}")
    eps_star = np.asarray(eps_star, dtype=float)
    active = [j for j in range(scenario.n_workers) if not np.isnan(eps_star[j])]
    T_max = T_grid[-1]
    oeie = []
    for j in active:
        e = eps_star[j] if perturb else np.inf
        oeie.append(one_snapshot_eie(scenario.intent_prior[:, j], e))
    osr = np.zeros(replications)
    mfl = np.zeros((replications, len(T_grid)))
    msr = np.zeros((replications, len(T_grid)))
    for r in range(replications):
        # replication 0 replays the run's own mechanism randomness
        rep_seed = seed if r == 0 else int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
        acc_osr, acc_mfl, acc_msr = [], [[] for _ in T_grid], [[] for _ in T_grid]
        for j in active:
            truth = scenario.true_intents[:, j]
            if perturb:
                st = IntentState(j, truth, float(eps_star[j]), seed=rep_seed,
                                 epoch_length=epoch_length, memoize=memoize)
                seq = report_sequence(st, T_max)
                e = float(eps_star[j])
            else:
                seq = np.tile(truth, (T_max, 1))
                e = np.inf
            stats = _attack_stats(truth, seq, e, scenario.intent_prior[:, j], T_grid, attacker)
            acc_osr.append(stats["osr"])
            for k, T in enumerate(T_grid):
                acc_mfl[k].append(stats[T][0])
                acc_msr[k].append(stats[T][1])
        osr[r] = np.mean(acc_osr) if active else np.nan
        for k in range(len(T_grid)):
            mfl[r, k] = np.mean(acc_mfl[k]) if active else np.nan
            msr[r, k] = np.mean(acc_msr[k]) if active else np.nan

    def se(x, axis=0):
        if x.shape[axis] < 2:
            return np.zeros(np.delete(x.shape, axis)) if x.ndim > 1 else 0.0
        return np.std(x, axis=axis, ddof=1) / np.sqrt(x.shape[axis])

    return {
        "T": T_grid,
        "OeIE": float(np.mean(oeie)) if oeie else float("nan"),
        "OSR": float(np.mean(osr)),
        "OSR_se": float(se(osr)),
        "MFL": mfl.mean(axis=0).tolist(),
        "MFL_se": np.atleast_1d(se(mfl)).tolist(),
        "MSR": msr.mean(axis=0).tolist(),
        "MSR_se": np.atleast_1d(se(msr)).tolist(),
        "MSR_by_replication": msr,
    }


@dataclass(frozen=True)
class AuditReport:
    violations: tuple
    checked: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def audit_ir_and_risk(scenario: Scenario, eps_star, reports, profile: ContractProfile,
                      alpha, recruits: dict, *, risk_checks: bool = True, seed: int = 0,
                      M: int = 200, qrisk_method: str = "mc",
                      online_checks: bool = True) -> AuditReport:
    """Recompute contract and recruitment constraints from raw run data.

    ``qrisk_method="mc"`` replays the planner's shared arrival samples (keyed
    by ``seed``); ``"exact"`` enumerates arrival patterns instead.
    """
    s = scenario
    cost = contract_costs(s, eps_star)
    reports = np.asarray(reports)
    v: list[tuple] = []
    checked = ["exclusivity", "ir", "budget"]
    x = profile.assignment(s.n_workers)
    for j in np.flatnonzero(x.sum(axis=0) > 1):
        v.append(("exclusivity", "worker", int(j)))
    for i, a in enumerate(profile.sets):
        w = sorted(a)
        for j in w:
            if np.isnan(cost[i, j]) or s.payments[i, j] < cost[i, j]:
                v.append(("ir", "pair", (i, j)))
        if s.payments[i, w].sum() > s.tasks[i].budget + 1e-9:
            v.append(("budget", "task", i))
    if risk_checks:
        checked += ["qrisk", "prisk"]
        samples = arrival_samples(s, seed, M) if qrisk_method == "mc" else None
        for i, a in enumerate(profile.sets):
            if not a:
                continue
            w = np.array(sorted(a))
            zeta = s.tasks[i].redundancy_factor
            if samples is not None:
                A = samples[:, w]
                Q = aggregate_quality_batch(A @ s.quality[i, w], A.sum(axis=1), zeta)
                r = float(np.mean(Q < s.tasks[i].quality_demand))
            else:
                r = quality_risk([(s.quality[i, j], s.workers[j].arrival_prob) for j in w],
                                 zeta, s.tasks[i].quality_demand, method="exact")
            if r > s.econ.rho1:
                v.append(("qrisk", "task", i))
        for j in range(s.n_workers):
            if pref_risk(x[:, j], s.intent_prior[:, j], s.n_tasks) > s.econ.rho2:
                v.append(("prisk", "worker", j))
    if online_checks and recruits:
        checked += ["on_exclusivity", "on_budget", "on_ir", "on_quality", "on_screen"]
        state = realize_execution(s, profile, _alpha_vector(alpha))
        seen: dict[int, int] = {}
        for i, a in recruits.items():
            for j in a:
                if j in seen or j not in state.idle_workers:
                    v.append(("on_exclusivity", "worker", j))
                seen[j] = i
            w = sorted(a)
            if not w:
                continue
            if s.payments[i, w].sum() > state.residual_budget[i] + 1e-9:
                v.append(("on_budget", "task", i))
            for j in w:
                if np.isnan(cost[i, j]) or s.payments[i, j] < cost[i, j]:
                    v.append(("on_ir", "pair", (i, j)))
                if reports[i, j] != 1:
                    v.append(("on_screen", "pair", (i, j)))
            base = s.quality[i, sorted(state.arrived_offline[i])].tolist()
            q_fin = aggregate_quality(base + s.quality[i, w].tolist(), s.tasks[i].redundancy_factor)
            if q_fin < s.tasks[i].quality_demand:
                v.append(("on_quality", "task", i))
    return AuditReport(tuple(v), tuple(checked))


def _alpha_vector(alpha):
    return alpha if isinstance(alpha, ArrivalVector) else ArrivalVector(np.asarray(alpha, np.int8))


def summarize(rows: list[dict], keys, group=("algorithm", "n_workers")) -> list[dict]:
    """Mean, standard deviation and standard error per group."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[g] for g in group), []).append(r)
    out = []
    for gk in sorted(groups, key=lambda t: tuple(str(x) for x in t)):
        rs = groups[gk]
        rec = dict(zip(group, gk))
        rec["runs"] = len(rs)
        for k in keys:
            vals = np.array([float(r[k]) for r in rs])
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            rec[f"{k}_mean"] = float(np.mean(vals))
            rec[f"{k}_std"] = sd
            rec[f"{k}_se"] = sd / np.sqrt(len(vals))
        out.append(rec)
    return out
