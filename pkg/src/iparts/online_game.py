"""Execution-time realisation and temporary recruitment for unmet tasks.

After arrivals are realised, tasks whose delivered quality misses demand
recruit idle workers under their residual budgets.  Arrivals are known, so
the online potential is evaluated exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import GameModel, NEReport, budget_cents, run_dynamics, to_cents, verify_equilibrium
from .market import ArrivalVector, Scenario
from .offline_game import ContractProfile, PlannerParams, contract_costs, contract_messages
from .quality import aggregate_quality, aggregate_quality_batch, social_welfare

PROBE_BYTES, PROBE_ACK_BYTES = 48, 16


@dataclass(frozen=True)
class ExecutionState:
    arrivals: ArrivalVector
    arrived_offline: tuple[frozenset, ...]
    base_sum: np.ndarray
    base_count: np.ndarray
    Q_base: np.ndarray
    residual_budget: np.ndarray
    unmet_tasks: frozenset
    idle_workers: frozenset


def realize_execution(scenario: Scenario, profile: ContractProfile,
                      arrivals: ArrivalVector) -> ExecutionState:
    alpha = np.asarray(arrivals.alpha).astype(bool)
    arrived, sums, counts, Qb, resid = [], [], [], [], []
    for i, a in enumerate(profile.sets):
        got = frozenset(j for j in a if alpha[j])
        w = sorted(got)
        arrived.append(got)
        q = scenario.quality[i, w]
        sums.append(float(q.sum()))
        counts.append(len(w))
        Qb.append(aggregate_quality(q.tolist(), scenario.tasks[i].redundancy_factor))
        resid.append(scenario.tasks[i].budget - float(scenario.payments[i, w].sum()))
    Qb = np.array(Qb)
    unmet = frozenset(int(i) for i in np.flatnonzero(Qb < scenario.demands))
    idle = frozenset(range(scenario.n_workers)) - profile.contracted()
    return ExecutionState(arrivals, tuple(arrived), np.array(sums), np.array(counts), Qb,
                          np.array(resid), unmet, idle)


def final_quality(base_qualities: Sequence[float], online_qualities: Sequence[float],
                  zeta: float) -> float:
    """Pooled redundancy-aware quality of offline arrivals and online recruits."""
    return aggregate_quality(list(base_qualities) + list(online_qualities), zeta)


class OnlineGame:
    """Unmet tasks recruiting from the arrived idle pool."""

    def __init__(self, scenario: Scenario, state: ExecutionState, reports: np.ndarray,
                 eps_star: np.ndarray, params: PlannerParams | None = None):
        self.scenario = scenario
        self.state = state
        self.params = params or PlannerParams()
        self.cost = contract_costs(scenario, np.asarray(eps_star, dtype=float))
        self.players = sorted(state.unmet_tasks)
        alpha = np.asarray(state.arrivals.alpha).astype(bool)
        reports = np.asarray(reports)
        pool = np.zeros(scenario.n_workers, dtype=bool)
        pool[list(state.idle_workers)] = True
        self.candidates = []
        for i in self.players:
            ok = (pool & alpha & (reports[i] == 1) & ~np.isnan(self.cost[i])
                  & (scenario.payments[i] >= self.cost[i]))
            self.candidates.append(frozenset(np.flatnonzero(ok).tolist()))
        self.zeta = scenario.zetas
        self.demand = scenario.demands

    @property
    def R_max(self) -> int:
        if self.params.R_max is not None:
            return self.params.R_max
        return max(1, 4 * len(self.players))

    def evaluate(self, p: int, avail: np.ndarray, rows: np.ndarray):
        i = self.players[p]
        S = rows.astype(float)
        qsum = S @ self.scenario.quality[i, avail]
        n = S.sum(axis=1)
        Q_on = aggregate_quality_batch(qsum, n, self.zeta[i])
        term = self.scenario.econ.omega3 * Q_on - S @ self.cost[i, avail]
        if self.params.best_effort:
            return term, np.ones(len(rows), dtype=bool)
        Q_fin = aggregate_quality_batch(self.state.base_sum[i] + qsum,
                                        self.state.base_count[i] + n, self.zeta[i])
        return term, Q_fin >= self.demand[i]

    def model(self) -> GameModel:
        s = self.scenario
        idx = self.players
        with np.errstate(invalid="ignore"):
            values = np.nan_to_num(s.econ.omega3 * s.quality[idx] - self.cost[idx], nan=-1.0)
        resid = self.state.residual_budget[idx]
        return GameModel(
            players=list(idx),
            candidates=self.candidates,
            prices=to_cents(s.payments[idx]).reshape(len(idx), s.n_workers),
            budgets=np.array([budget_cents(max(b, 0.0)) for b in resid], dtype=np.int64),
            values=values.reshape(len(idx), s.n_workers),
            evaluate=self.evaluate,
            n_workers=s.n_workers,
            enum_limit=self.params.enum_limit,
        )

    def potential(self, online: dict) -> float:
        """Exact online welfare as the sum of per-task terms."""
        total = 0.0
        for p, i in enumerate(self.players):
            a = online.get(i, frozenset())
            if a:
                avail = np.array(sorted(a), dtype=np.int64)
                total += float(self.evaluate(p, avail, np.ones((1, len(avail)), bool))[0][0])
        return total


@dataclass
class OnlineResult:
    recruits: dict
    trace: list[float]
    accepted: list[dict]
    converged: bool
    rounds: int
    still_unmet: list[int]
    log: list[tuple] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "recruits": {str(i): sorted(a) for i, a in self.recruits.items()},
            "potential_trace": self.trace,
            "converged": self.converged,
            "rounds": self.rounds,
            "still_unmet": self.still_unmet,
        }, sort_keys=True)


def aspire_on(game: OnlineGame) -> OnlineResult:
    model = game.model()
    log: list[tuple] = []

    def on_round(t, profile, props, improving):
        for p in improving:
            i = model.players[p]
            for j in sorted(props[p].best - profile[p]):
                log.append(("on", t, i, j, "down", PROBE_BYTES))
                log.append(("on", t, i, j, "up", PROBE_ACK_BYTES))

    if not game.players:
        return OnlineResult({}, [0.0], [], True, 0, [], [])
    res = run_dynamics(model, game.params.improve_eps, game.R_max, on_round=on_round)
    contracts = []
    for acc in res.accepted:
        contracts += contract_messages("on", acc["round"], acc["player"], acc["added"],
                                       acc["removed"])
    # stable sort: within a round, probes precede the contract exchange
    log = sorted(log + contracts, key=lambda r: r[1])
    recruits = {i: res.profile[p] for p, i in enumerate(model.players)}
    still = [i for i in model.players
             if final_quality_of(game, i, recruits[i]) < game.demand[i]]
    return OnlineResult(recruits, res.trace, res.accepted, res.converged, res.rounds, still, log)


def final_quality_of(game: OnlineGame, i: int, recruits) -> float:
    s = game.scenario
    base = s.quality[i, sorted(game.state.arrived_offline[i])].tolist()
    extra = s.quality[i, sorted(recruits)].tolist()
    return final_quality(base, extra, s.tasks[i].redundancy_factor)


def online_welfare(recruits: dict, scenario: Scenario, eps_star: np.ndarray) -> float:
    """Online welfare with payments explicit on both sides."""
    cost = contract_costs(scenario, np.asarray(eps_star, dtype=float))
    task_u, worker_u = [], []
    for i, a in recruits.items():
        w = sorted(a)
        if not w:
            continue
        p = scenario.payments[i, w]
        Q = aggregate_quality(scenario.quality[i, w].tolist(), scenario.tasks[i].redundancy_factor)
        task_u.append(scenario.econ.omega3 * Q - float(p.sum()))
        worker_u.extend((p - cost[i, w]).tolist())
    return social_welfare(task_u, worker_u)


def verify_ne_online(game: OnlineGame, recruits: dict) -> NEReport:
    profile = [frozenset(recruits.get(i, ())) for i in game.players]
    return verify_equilibrium(game.model(), profile, game.params.improve_eps)
