"""Offline pre-planning as an exact potential game.

Tasks pick contract sets from their candidate pools.  The potential is the
expected social welfare over arrival uncertainty, estimated on one shared
set of Monte-Carlo arrival samples; each task's payoff is its marginal
contribution to that estimate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (GameModel, NEReport, budget_cents, knapsack_select, run_dynamics,
                       to_cents, verify_equilibrium)
from .market import Scenario
from .quality import (aggregate_quality_batch, pref_risk, quality_risk, social_welfare,
                      worker_cost)
from .rng import stream

__all__ = [
    "PlannerParams", "ContractProfile", "OfflineGame", "OfflineResult", "build_candidates",
    "knapsack_select", "estimate_potential", "check_feasible", "marginal_payoff",
    "aspire_off", "verify_ne", "arrival_samples",
]

OFFER_BYTES, ACK_BYTES, RELEASE_BYTES = 96, 32, 32


@dataclass(frozen=True)
class PlannerParams:
    M: int = 200
    improve_eps: float = 1e-4
    T_max: int = 1000
    R_max: int | None = None
    tie_break: str = "max_gain_lowest_id"
    enum_limit: int = 15
    best_effort: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not self.improve_eps > 0:
            raise ValueError("improve_eps must be positive")
        if self.T_max < 1:
            raise ValueError("T_max must be at least 1")
        if self.R_max is not None and self.R_max < 1:
            raise ValueError("R_max must be at least 1")
        if self.tie_break != "max_gain_lowest_id":
            raise ValueError(f"unknown tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class ContractProfile:
    """Contract set per task."""

    sets: tuple[frozenset, ...]

    @classmethod
    def empty(cls, n_tasks: int) -> "ContractProfile":
        return cls(tuple(frozenset() for _ in range(n_tasks)))

    @classmethod
    def from_lists(cls, sets) -> "ContractProfile":
        return cls(tuple(frozenset(int(j) for j in s) for s in sets))

    def with_task(self, i: int, new) -> "ContractProfile":
        sets = list(self.sets)
        sets[i] = frozenset(new)
        return ContractProfile(tuple(sets))

    def assignment(self, n_workers: int) -> np.ndarray:
        x = np.zeros((len(self.sets), n_workers), dtype=np.int8)
        for i, s in enumerate(self.sets):
            for j in s:
                x[i, j] += 1
        return x

    def contracted(self) -> set:
        return set().union(*self.sets) if self.sets else set()

    def to_lists(self) -> list[list[int]]:
        return [sorted(s) for s in self.sets]


def build_candidates(scenario: Scenario, reports: np.ndarray, eps_star: np.ndarray) -> list[frozenset]:
    """Workers reporting willingness, individually rational and calibrated."""
    cost = contract_costs(scenario, eps_star)
    ok = (np.asarray(reports) == 1) & ~np.isnan(cost) & (scenario.payments >= cost)
    return [frozenset(np.flatnonzero(ok[i]).tolist()) for i in range(scenario.n_tasks)]


def contract_costs(scenario: Scenario, eps_star: np.ndarray) -> np.ndarray:
    """Execution plus privacy cost; ``nan`` in columns of opted-out workers."""
    lam = scenario.privacy_cost_coeffs
    with np.errstate(invalid="ignore"):
        return worker_cost(scenario.exe_cost, lam[None, :], np.asarray(eps_star)[None, :])


def arrival_samples(scenario: Scenario, seed: int, M: int, key: int = 0) -> np.ndarray:
    """``M`` Bernoulli arrival vectors; column ``j`` comes from its own stream."""
    pi = scenario.arrival_probs
    out = np.empty((M, scenario.n_workers), dtype=bool)
    for j in range(scenario.n_workers):
        out[:, j] = stream(seed, "mc", key, j).random(M) < pi[j]
    return out


class OfflineGame:
    """Planning context: costs, candidates and the shared arrival samples."""

    def __init__(self, scenario: Scenario, reports: np.ndarray, eps_star: np.ndarray,
                 params: PlannerParams | None = None, seed: int = 0):
        self.scenario = scenario
        self.params = params or PlannerParams()
        self.seed = int(seed)
        self.eps_star = np.asarray(eps_star, dtype=float)
        self.reports = np.asarray(reports, dtype=np.int8)
        self.cost = contract_costs(scenario, self.eps_star)
        self.candidates = build_candidates(scenario, self.reports, self.eps_star)
        self.samples = arrival_samples(scenario, self.seed, self.params.M)
        self.zeta = scenario.zetas
        self.demand = scenario.demands
        self.price_cents = to_cents(scenario.payments)
        self.budget_cents = np.array([budget_cents(b) for b in scenario.budgets])

    def knapsack_values(self) -> np.ndarray:
        s = self.scenario
        pi = s.arrival_probs[None, :]
        with np.errstate(invalid="ignore"):
            v = pi * (s.econ.omega3 * s.quality - self.cost)
        return np.nan_to_num(v, nan=-1.0)

    def evaluate(self, i: int, avail: np.ndarray, rows: np.ndarray):
        """Per-set estimated term and feasibility for task ``i``."""
        A = self.samples[:, avail].astype(float)
        S = rows.astype(float).T
        q = self.scenario.quality[i, avail]
        c = self.cost[i, avail]
        n = A @ S
        Q = aggregate_quality_batch((A * q) @ S, n, self.zeta[i])
        term = (self.scenario.econ.omega3 * Q - (A * c) @ S).mean(axis=0)
        qrisk = (Q < self.demand[i]).mean(axis=0)
        feas = qrisk <= self.scenario.econ.rho1
        prisk = (1.0 - self.scenario.intent_prior[i, avail]) / self.scenario.n_tasks
        feas &= ~(rows & (prisk > self.scenario.econ.rho2)).any(axis=1)
        return term, feas

    def model(self) -> GameModel:
        return GameModel(
            players=list(range(self.scenario.n_tasks)),
            candidates=self.candidates,
            prices=self.price_cents,
            budgets=self.budget_cents,
            values=self.knapsack_values(),
            evaluate=self.evaluate,
            n_workers=self.scenario.n_workers,
            enum_limit=self.params.enum_limit,
        )

    def qrisk_mc(self, i: int, workers) -> float:
        """Quality risk of a contract set on the planner's shared samples."""
        w = np.array(sorted(workers), dtype=np.int64)
        if len(w) == 0:
            return 1.0
        A = self.samples[:, w]
        Q = aggregate_quality_batch(A @ self.scenario.quality[i, w], A.sum(axis=1), self.zeta[i])
        return float(np.mean(Q < self.demand[i]))


def estimate_potential(game: OfflineGame, profile: ContractProfile) -> float:
    """Sample mean of realised welfare with payments kept explicit."""
    s = game.scenario
    M = game.samples.shape[0]
    task_u = np.zeros((M, s.n_tasks))
    worker_u = np.zeros((M, s.n_workers))
    for i, a in enumerate(profile.sets):
        if not a:
            continue
        w = np.array(sorted(a), dtype=np.int64)
        A = game.samples[:, w].astype(float)
        p = s.payments[i, w]
        Q = aggregate_quality_batch(A @ s.quality[i, w], A.sum(axis=1), game.zeta[i])
        task_u[:, i] = s.econ.omega3 * Q - A @ p
        worker_u[:, w] += A * (p - game.cost[i, w])
    per_sample = [social_welfare(task_u[m], worker_u[m]) for m in range(M)]
    return float(np.mean(per_sample))


def marginal_payoff(game: OfflineGame, profile: ContractProfile, i: int) -> float:
    return estimate_potential(game, profile) - estimate_potential(game, profile.with_task(i, ()))


@dataclass(frozen=True)
class Violation:
    kind: str
    entity: str
    index: int
    detail: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[Violation, ...]


def check_feasible(game: OfflineGame, profile: ContractProfile, skip_unfilled: bool = False,
                   qrisk_method: str = "mc") -> FeasibilityReport:
    """Exclusivity, candidate membership, budget, quality risk and mismatch risk."""
    s = game.scenario
    out: list[Violation] = []
    x = profile.assignment(s.n_workers)
    for j in np.flatnonzero(x.sum(axis=0) > 1):
        tasks = np.flatnonzero(x[:, j]).tolist()
        out.append(Violation("exclusivity", "worker", int(j), f"tasks {tasks}"))
    for i, a in enumerate(profile.sets):
        extra = sorted(a - game.candidates[i])
        if extra:
            out.append(Violation("candidate", "task", i, f"workers {extra}"))
        w = sorted(a)
        if int(game.price_cents[i, w].sum()) > game.budget_cents[i]:
            out.append(Violation("budget", "task", i,
                                 f"{s.payments[i, w].sum():.2f} > {s.budgets[i]:.2f}"))
        if not a and skip_unfilled:
            continue
        if qrisk_method == "mc":
            r = game.qrisk_mc(i, a)
        else:
            r = quality_risk([(s.quality[i, j], s.arrival_probs[j]) for j in w],
                             float(game.zeta[i]), float(game.demand[i]), method="exact")
        if r > s.econ.rho1:
            out.append(Violation("qrisk", "task", i, f"{r:.4f} > {s.econ.rho1}"))
    for j in range(s.n_workers):
        r = pref_risk(x[:, j], s.intent_prior[:, j], s.n_tasks)
        if r > s.econ.rho2:
            out.append(Violation("prisk", "worker", j, f"{r:.4f} > {s.econ.rho2}"))
    return FeasibilityReport(not out, tuple(out))


@dataclass
class OfflineResult:
    profile: ContractProfile
    trace: list[float]
    accepted: list[dict]
    converged: bool
    rounds: int
    unfilled: list[int]
    log: list[tuple] = field(default_factory=list)

    def to_json(self, scenario: Scenario) -> str:
        return json.dumps({
            "contracts": {str(i): sorted(a) for i, a in enumerate(self.profile.sets)},
            "reserved_budget": {
                str(i): float(scenario.payments[i, sorted(a)].sum())
                for i, a in enumerate(self.profile.sets)
            },
            "potential_trace": self.trace,
            "converged": self.converged,
            "rounds": self.rounds,
            "unfilled": self.unfilled,
        }, sort_keys=True)


def contract_messages(stage: str, round_: int, task: int, added, removed) -> list[tuple]:
    rows = []
    for j in added:
        rows.append((stage, round_, task, j, "down", OFFER_BYTES))
        rows.append((stage, round_, task, j, "up", ACK_BYTES))
    for j in removed:
        rows.append((stage, round_, task, j, "down", RELEASE_BYTES))
        rows.append((stage, round_, task, j, "up", ACK_BYTES))
    return rows


def aspire_off(game: OfflineGame) -> OfflineResult:
    """Asynchronous max-gain feasible improvement from the empty profile."""
    p = game.params
    res = run_dynamics(game.model(), p.improve_eps, p.T_max)
    profile = ContractProfile(tuple(res.profile))
    log = []
    for acc in res.accepted:
        log += contract_messages("off", acc["round"], acc["player"], acc["added"], acc["removed"])
    unfilled = [i for i, a in enumerate(profile.sets) if not a]
    return OfflineResult(profile, res.trace, res.accepted, res.converged, res.rounds,
                         unfilled, log)


def verify_ne(game: OfflineGame, profile: ContractProfile) -> NEReport:
    """No task has a feasible deviation gaining more than ``improve_eps``."""
    return verify_equilibrium(game.model(), list(profile.sets), game.params.improve_eps)
