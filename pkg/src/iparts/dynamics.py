"""Knapsack search and the asynchronous max-gain improvement loop.

Both recruitment games share this machinery.  A game supplies, per player,
a sorted candidate pool, integer prices, knapsack values, a budget and a
vectorised evaluator returning ``(term, feasible)`` for a batch of candidate
sets.  A player's payoff equals its own term, so unilateral gains equal
potential gains by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

TOL = 1e-9


def to_cents(x) -> np.ndarray:
    return np.round(np.asarray(x, dtype=float) * 100.0).astype(np.int64)


def budget_cents(b: float) -> int:
    return int(math.floor(b * 100.0 + 1e-6))


def knapsack_select(avail: Sequence[int], prices, values, budget: float,
                    prices_in_cents: bool = False) -> tuple[int, ...]:
    """Best positive-value subset of ``avail`` under the budget.

    Exact 0/1 DP over integer cents (scaled by the gcd of all weights).
    Among optimal subsets the lexicographically smallest id tuple wins.
    """
    avail = np.asarray(avail, dtype=np.int64)
    order = np.argsort(avail, kind="stable")
    avail = avail[order]
    w = np.asarray(prices)[order] if prices_in_cents else to_cents(np.asarray(prices)[order])
    v = np.asarray(values, dtype=float)[order]
    cap = int(budget) if prices_in_cents else budget_cents(budget)
    if cap < 0:
        raise ValueError("budget must be non-negative")
    if np.any(w < 0):
        raise ValueError("prices must be non-negative")
    keep = (v > 0) & (w <= cap)
    avail, w, v = avail[keep], w[keep], v[keep]
    n = len(avail)
    if n == 0:
        return ()
    # every subset sum is a multiple of the weights' gcd
    g = math.gcd(*map(int, w)) or 1
    w = w // g
    cap //= g
    best = np.zeros((n + 1, cap + 1))
    for k in range(n - 1, -1, -1):
        best[k] = best[k + 1]
        wk = int(w[k])
        if wk <= cap:
            cand = best[k + 1][: cap + 1 - wk] + v[k]
            np.maximum(best[k][wk:], cand, out=best[k][wk:])
    chosen = []
    c = cap
    for k in range(n):
        wk = int(w[k])
        if wk <= c and v[k] + best[k + 1][c - wk] >= best[k][c] - TOL:
            chosen.append(int(avail[k]))
            c -= wk
    return tuple(chosen)


@lru_cache(maxsize=32)
def _all_masks(k: int) -> np.ndarray:
    idx = np.arange(1 << k, dtype=np.int64)
    return ((idx[:, None] >> np.arange(k)) & 1).astype(bool)


@dataclass
class GameModel:
    """Per-player data a game exposes to the improvement loop."""

    players: list[int]
    candidates: list[frozenset]
    prices: np.ndarray          # cents, [player, worker]
    budgets: np.ndarray         # cents, [player]
    values: np.ndarray          # knapsack values, [player, worker]
    evaluate: Callable[[int, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    n_workers: int
    enum_limit: int = 15


@dataclass(frozen=True)
class Proposal:
    best: frozenset | None
    delta: float
    best_term: float
    cur_term: float
    mode: str
    avail: frozenset
    knap: frozenset


def candidate_family(avail: np.ndarray, cur: frozenset, knap: frozenset, prices: np.ndarray,
                     budget: int, enum_limit: int) -> tuple[np.ndarray, str]:
    """Budget-feasible candidate sets as a boolean matrix over ``avail``.

    Small pools are enumerated exhaustively; larger ones use the knapsack
    set plus single add/drop/swap moves around it and around ``cur``.
    """
    k = len(avail)
    pos = {int(j): t for t, j in enumerate(avail)}
    if k <= enum_limit:
        masks = _all_masks(k)
        ok = masks.astype(np.int64) @ prices <= budget
        rows = masks[ok]
        if knap:
            first = np.zeros(k, dtype=bool)
            first[[pos[j] for j in knap]] = True
            rows = np.vstack([first, rows])
        return rows, "enumerate"
    eye = np.eye(k, dtype=bool)
    blocks = []
    if knap:
        blocks.append(_mask_of(knap, avail)[None, :])
    for base in (knap, cur):
        b = _mask_of(base, avail)
        ins, outs = np.flatnonzero(b), np.flatnonzero(~b)
        blocks.append(b | eye[outs])
        drops = b & ~eye[ins]
        blocks.append(drops)
        if len(ins) and len(outs):
            swaps = drops[:, None, :] | eye[outs][None, :, :]
            blocks.append(swaps.reshape(-1, k))
    rows = np.vstack(blocks)
    ok = rows.astype(np.int64) @ prices <= budget
    return rows[ok], "search"


def _mask_of(s: frozenset, avail: np.ndarray) -> np.ndarray:
    # avail is sorted; members of s outside avail are ignored
    m = np.zeros(len(avail), dtype=bool)
    if s and len(avail):
        ids = np.fromiter(s, dtype=np.int64, count=len(s))
        idx = np.minimum(np.searchsorted(avail, ids), len(avail) - 1)
        m[idx[avail[idx] == ids]] = True
    return m


def best_response(model: GameModel, p: int, cur: frozenset, idle: frozenset) -> Proposal:
    """Best feasible non-empty set for player index ``p`` in the search family."""
    avail_set = (cur | idle) & model.candidates[p]
    avail = np.array(sorted(avail_set), dtype=np.int64)
    if len(avail) == 0:
        return Proposal(None, 0.0, 0.0, 0.0, "enumerate", frozenset(), frozenset())
    prices = model.prices[p, avail]
    knap = frozenset(knapsack_select(avail, prices, model.values[p, avail],
                                     int(model.budgets[p]), prices_in_cents=True))
    rows, mode = candidate_family(avail, cur, knap, prices, int(model.budgets[p]),
                                  model.enum_limit)
    rows = rows[rows.any(axis=1)]
    cur_row = _mask_of(cur, avail)[None, :]
    cur_term = float(model.evaluate(p, avail, cur_row)[0][0]) if cur else 0.0
    if len(rows) == 0:
        return Proposal(None, 0.0, cur_term, cur_term, mode, avail_set, knap)
    term, feas = model.evaluate(p, avail, rows)
    if not feas.any():
        return Proposal(None, 0.0, cur_term, cur_term, mode, avail_set, knap)
    masked = np.where(feas, term, -np.inf)
    r = int(np.argmax(masked))
    best = frozenset(int(j) for j in avail[rows[r]])
    return Proposal(best, float(term[r]) - cur_term, float(term[r]), cur_term,
                    mode, avail_set, knap)


@dataclass
class DynamicsResult:
    profile: list[frozenset]
    trace: list[float]
    accepted: list[dict]
    converged: bool
    rounds: int
    proposals: list[dict] = field(default_factory=list)


def run_dynamics(model: GameModel, improve_eps: float, max_rounds: int,
                 init: list[frozenset] | None = None,
                 on_round: Callable | None = None) -> DynamicsResult:
    """Asynchronous feasible improvement: one max-gain update per round.

    ``trace[0]`` is the potential of the initial profile and every later
    entry follows one accepted update.
    """
    n = len(model.players)
    profile = list(init) if init is not None else [frozenset()] * n
    taken = set().union(*profile) if profile else set()
    idle = frozenset(range(model.n_workers)) - taken
    terms = [0.0] * n
    for p in range(n):
        if profile[p]:
            avail = np.array(sorted(profile[p]), dtype=np.int64)
            terms[p] = float(model.evaluate(p, avail, np.ones((1, len(avail)), bool))[0][0])
    trace = [float(sum(terms))]
    accepted: list[dict] = []
    cache: dict[int, tuple[frozenset, Proposal]] = {}
    converged = False
    rounds = 0
    while rounds < max_rounds:
        props = []
        for p in range(n):
            cur = profile[p]
            avail_new = (cur | idle) & model.candidates[p]
            hit = cache.get(p)
            if hit is not None and hit[0] == cur and _reusable(hit[1], avail_new, model.enum_limit):
                prop = hit[1]
            else:
                prop = best_response(model, p, cur, idle)
                cache[p] = (cur, prop)
            props.append(prop)
        gains = [pr.delta if pr.best is not None else 0.0 for pr in props]
        improving = [p for p in range(n) if gains[p] > improve_eps]
        rounds += 1
        if on_round is not None:
            on_round(rounds - 1, profile, props, improving)
        if not improving:
            converged = True
            break
        star = max(improving, key=lambda p: (gains[p], -p))
        prop = props[star]
        old = profile[star]
        profile[star] = prop.best
        idle = (idle | old) - prop.best
        terms[star] = prop.best_term
        trace.append(float(sum(terms)))
        accepted.append({
            "round": rounds - 1,
            "player": model.players[star],
            "gain": gains[star],
            "added": sorted(prop.best - old),
            "removed": sorted(old - prop.best),
        })
        cache.pop(star, None)
    return DynamicsResult(profile, trace, accepted, converged, rounds)


def _reusable(prop: Proposal, avail_new: frozenset, enum_limit: int) -> bool:
    if avail_new == prop.avail:
        return True
    if not avail_new <= prop.avail:
        return False
    # shrinking the pool keeps the cached optimum when the family can only shrink
    if (len(avail_new) <= enum_limit) != (prop.mode == "enumerate"):
        return False
    if prop.best is not None and not prop.best <= avail_new:
        return False
    return prop.knap <= avail_new


@dataclass(frozen=True)
class NEReport:
    ok: bool
    max_gain: dict
    modes: dict


def verify_equilibrium(model: GameModel, profile: list[frozenset], improve_eps: float) -> NEReport:
    taken = set().union(*profile) if profile else set()
    idle = frozenset(range(model.n_workers)) - taken
    gains, modes = {}, {}
    for p, pid in enumerate(model.players):
        prop = best_response(model, p, profile[p], idle)
        gains[pid] = prop.delta if prop.best is not None else 0.0
        modes[pid] = prop.mode
    ok = all(g <= improve_eps for g in gains.values())
    return NEReport(ok, gains, modes)
