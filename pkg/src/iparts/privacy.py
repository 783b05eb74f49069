"""Intent perturbation, budget calibration and the inference attackers.

Randomised response keeps each intent bit with probability
``e^eps / (e^eps + 1)``.  Reports are memoised per epoch, so repeated
observations within an epoch carry no extra information.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .market import Scenario, Worker
from .rng import stream

INFEASIBLE = None
VECTOR_LIMIT = 12


def _check_eps(eps) -> None:
    if isinstance(eps, (float, int)):
        if not eps > 0:
            raise ValueError(f"privacy budget must be positive, got {eps}")
        return
    if not np.all(np.asarray(eps) > 0):
        raise ValueError(f"privacy budget must be positive, got {eps}")


def keep_probability(eps):
    _check_eps(eps)
    return expit(eps)


def flip_probability(eps):
    _check_eps(eps)
    return expit(-np.asarray(eps, dtype=float))


def rr_perturb(bits, eps, rng: np.random.Generator):
    """Randomised response applied entry-wise to a bit or bit array."""
    flip = flip_probability(eps)
    b = np.asarray(bits, dtype=np.int8)
    if np.any((b != 0) & (b != 1)):
        raise ValueError("inputs must be bits")
    u = rng.random(b.shape)
    out = b ^ (u < flip).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def rr_likelihood(report, truth, eps) -> float:
    """Exact probability of observing ``report`` given ``truth`` (vectors)."""
    r = np.asarray(report)
    b = np.asarray(truth)
    if r.shape != b.shape:
        raise ValueError("report and truth must have equal lengths")
    keep, flip = keep_probability(eps), flip_probability(eps)
    return float(np.prod(np.where(r == b, keep, flip)))


@dataclass
class IntentState:
    """A worker's true intent and its memoised permanent reports."""

    worker_id: int
    true_intent: np.ndarray
    calibrated_eps: float | None
    seed: int = 0
    epoch_length: int = 10
    memoize: bool = True
    memo: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epoch_length < 1:
            raise ValueError("epoch_length must be a positive integer")
        self.true_intent = np.asarray(self.true_intent, dtype=np.int8)

    def epoch(self, round_: int) -> int:
        return round_ // self.epoch_length


def mirror_report(state: IntentState, round_: int) -> np.ndarray:
    """Report for ``round_``: the epoch's permanent vector (or fresh RR without memo)."""
    if state.calibrated_eps is INFEASIBLE:
        raise RuntimeError(f"worker {state.worker_id} opted out (no feasible budget)")
    if round_ < 0:
        raise ValueError("round must be non-negative")
    if not state.memoize:
        return _fresh_reports(state, round_ + 1)[round_]
    e = state.epoch(round_)
    if e not in state.memo:
        # a new epoch discards older permanent vectors
        state.memo.clear()
        rng = stream(state.seed, "mirror", state.worker_id, e)
        state.memo[e] = rr_perturb(state.true_intent, state.calibrated_eps, rng)
    return state.memo[e].copy()


def _fresh_reports(state: IntentState, T: int) -> np.ndarray:
    # row t is the round-t report; one stream per worker, consumed in round order
    rng = stream(state.seed, "nomem", state.worker_id)
    flips = rng.random((T, state.true_intent.size)) < flip_probability(state.calibrated_eps)
    return state.true_intent[None, :] ^ flips.astype(np.int8)


def report_sequence(state: IntentState, T: int) -> np.ndarray:
    """Reports for rounds ``0..T-1`` stacked row-wise."""
    if state.calibrated_eps is INFEASIBLE:
        raise RuntimeError(f"worker {state.worker_id} opted out (no feasible budget)")
    if not state.memoize:
        return _fresh_reports(state, T)
    L = state.epoch_length
    per_epoch = np.stack([mirror_report(state, e * L) for e in range(-(-T // L))])
    return np.repeat(per_epoch, L, axis=0)[:T]


def eird(eps: float, gamma: float, num_tasks: int) -> float:
    """Expected weighted-Hamming distortion of an RR report."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if num_tasks < 1:
        raise ValueError("num_tasks must be at least 1")
    return float(gamma * num_tasks * flip_probability(eps))


@dataclass(frozen=True)
class AttackReport:
    estimate: np.ndarray
    posterior_per_entry: np.ndarray
    expected_error: float


def _prior_weights(report_len: int, prior, weights):
    phi = np.broadcast_to(np.asarray(prior, dtype=float), (report_len,))
    w = (np.ones(report_len) if weights is None
         else np.broadcast_to(np.asarray(weights, dtype=float), (report_len,)))
    if np.any((phi < 0) | (phi > 1)):
        raise ValueError("prior entries must lie in [0, 1]")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return phi, w


def one_snapshot_attack(report, prior, eps, weights=None) -> AttackReport:
    """Bayes-optimal entry-wise inference from a single report."""
    r = np.asarray(report, dtype=np.int8)
    phi, w = _prior_weights(r.size, prior, weights)
    keep, flip = keep_probability(eps), flip_probability(eps)
    like1 = np.where(r == 1, keep, flip)
    like0 = np.where(r == 1, flip, keep)
    joint1 = phi * like1
    joint0 = (1.0 - phi) * like0
    post = joint1 / (joint1 + joint0)
    est = (post >= 0.5).astype(np.int8)
    err = float(np.sum(w * np.minimum(post, 1.0 - post)))
    return AttackReport(est, post, err)


def _entry_eie(phi, eps):
    keep, flip = keep_probability(eps), flip_probability(eps)
    return (np.minimum(phi * keep, (1.0 - phi) * flip)
            + np.minimum(phi * flip, (1.0 - phi) * keep))


def one_snapshot_eie(prior, eps, weights=None, num_tasks: int | None = None) -> float:
    """Expected weighted error of the one-snapshot attacker."""
    n = num_tasks if num_tasks is not None else np.size(prior)
    phi, w = _prior_weights(n, prior, weights)
    return float(np.sum(w * _entry_eie(phi, eps)))


def _bits(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.int8)


def factorized_vector_prior(prior) -> np.ndarray:
    """Joint probabilities over all ``2^n`` intent vectors (bit ``i`` = entry ``i``)."""
    phi = np.asarray(prior, dtype=float)
    B = _bits(phi.size)
    return np.prod(np.where(B == 1, phi, 1.0 - phi), axis=1)


def vector_attack(report, vector_prior, eps, weights=None) -> AttackReport:
    """Inference under an arbitrary prior over full intent vectors (``n <= 12``).

    The joint posterior is formed over all vectors; weighted Hamming loss
    makes the optimal estimate the per-entry marginal MAP.
    """
    r = np.asarray(report, dtype=np.int8)
    n = r.size
    if n > VECTOR_LIMIT:
        raise NotImplementedError(f"vector inference supports at most {VECTOR_LIMIT} tasks")
    pv = np.asarray(vector_prior, dtype=float)
    if pv.shape != (1 << n,):
        raise ValueError(f"vector prior must have length {1 << n}")
    _, w = _prior_weights(n, 0.5, weights)
    B = _bits(n)
    keep, flip = keep_probability(eps), flip_probability(eps)
    like = np.prod(np.where(B == r, keep, flip), axis=1)
    joint = pv * like
    total = joint.sum()
    if total <= 0:
        raise ValueError("report has zero probability under the prior")
    marg1 = (joint[:, None] * B).sum(axis=0) / total
    est = (marg1 >= 0.5).astype(np.int8)
    err = float(np.sum(w * np.minimum(marg1, 1.0 - marg1)))
    return AttackReport(est, marg1, err)


@dataclass(frozen=True)
class FloorCheck:
    satisfied: bool
    total: float
    h: Callable[[np.ndarray], float]


def inference_floor_check(prior, eps, weights, beta0: float, num_tasks: int | None = None) -> FloorCheck:
    """Tight auxiliary assignment ``h(report)``; its sum over reports is the eIE."""
    if beta0 < 0:
        raise ValueError("beta0 must be non-negative")
    n = num_tasks if num_tasks is not None else np.size(prior)
    phi, w = _prior_weights(n, prior, weights)
    keep, flip = keep_probability(eps), flip_probability(eps)

    def h(report) -> float:
        r = np.asarray(report)
        j1 = phi * np.where(r == 1, keep, flip)
        j0 = (1.0 - phi) * np.where(r == 1, flip, keep)
        marg = j1 + j0
        prob_r = float(np.prod(marg))
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(marg > 0, j1 / marg, 0.0)
        return prob_r * float(np.sum(w * np.minimum(post, 1.0 - post)))

    total = one_snapshot_eie(phi, eps, w)
    return FloorCheck(total >= beta0, total, h)


@dataclass(frozen=True)
class PrivacyCaps:
    """Distortion cap, inference-error floor and loss weights.

    ``None`` for ``Q_loss_max``/``beta0`` selects the defaults
    ``0.3 * gamma * |S|`` and ``0.2 * sum(omega)``.
    """

    Q_loss_max: float | None = None
    beta0: float | None = None
    gamma: float = 1.0
    omega: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        for name in ("Q_loss_max", "beta0", "gamma"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if np.any(np.asarray(self.omega) < 0):
            raise ValueError("omega must be non-negative")

    def resolve(self, num_tasks: int) -> tuple[float, float, np.ndarray]:
        w = np.broadcast_to(np.asarray(self.omega, dtype=float), (num_tasks,))
        q = 0.3 * self.gamma * num_tasks if self.Q_loss_max is None else self.Q_loss_max
        b = 0.2 * float(w.sum()) if self.beta0 is None else self.beta0
        return q, b, w


def primer_calibrate(worker: Worker, caps: PrivacyCaps, step: float, num_tasks: int,
                     prior=0.5) -> float | None:
    """Smallest grid budget meeting both the distortion cap and the error floor."""
    if not step > 0:
        raise ValueError("step must be positive")
    lo, hi = worker.eps_range
    q_max, beta0, w = caps.resolve(num_tasks)
    phi = np.broadcast_to(np.asarray(prior, dtype=float), (num_tasks,))
    n_steps = int(math.floor((hi - lo) / step + 1e-9))
    for k in range(n_steps + 1):
        eps = lo + k * step
        if (eird(eps, caps.gamma, num_tasks) <= q_max
                and one_snapshot_eie(phi, eps, w) >= beta0):
            return eps
    return INFEASIBLE


def calibrate_workers(scenario: Scenario, caps: PrivacyCaps, step: float = 0.01) -> np.ndarray:
    """Calibrated budget per worker; ``nan`` marks an opted-out worker."""
    out = np.full(scenario.n_workers, np.nan)
    for j, w in enumerate(scenario.workers):
        e = primer_calibrate(w, caps, step, scenario.n_tasks, scenario.intent_prior[:, j])
        if e is not INFEASIBLE:
            out[j] = e
    return out


def intent_states(scenario: Scenario, eps_star: np.ndarray, seed: int,
                  epoch_length: int = 10, memoize: bool = True) -> list[IntentState]:
    return [
        IntentState(j, scenario.true_intents[:, j],
                    None if np.isnan(eps_star[j]) else float(eps_star[j]),
                    seed=seed, epoch_length=epoch_length, memoize=memoize)
        for j in range(scenario.n_workers)
    ]


def collect_reports(states: list[IntentState], round_: int = 0) -> np.ndarray:
    """Task-by-worker report matrix; opted-out workers report nothing."""
    cols = []
    for s in states:
        if s.calibrated_eps is INFEASIBLE:
            cols.append(np.zeros_like(s.true_intent))
        else:
            cols.append(mirror_report(s, round_))
    return np.stack(cols, axis=1).astype(np.int8)


def multi_snapshot_attack(reports) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry frequency of ones and the majority estimate (``F >= 0.5``)."""
    R = np.asarray(reports, dtype=float)
    if R.ndim != 2 or R.shape[0] == 0:
        raise ValueError("need at least one report of equal length")
    F = R.mean(axis=0)
    return F, (F >= 0.5).astype(np.int8)


def lr_threshold_attack(reports, eps, prior=0.5) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-odds test over i.i.d. reports: returns log-odds and estimate."""
    R = np.asarray(reports, dtype=float)
    if R.ndim != 2 or R.shape[0] == 0:
        raise ValueError("need at least one report of equal length")
    T = R.shape[0]
    c = R.sum(axis=0)
    phi = np.broadcast_to(np.asarray(prior, dtype=float), c.shape)
    with np.errstate(divide="ignore"):
        log_prior = np.log(phi) - np.log1p(-phi)
    llr = (2.0 * c - T) * np.log(keep_probability(eps) / flip_probability(eps))
    lo = log_prior + llr
    return lo, (lo >= 0).astype(np.int8)
