"""Redundancy-aware quality, utilities, welfare and the two risk functionals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import stream

EXACT_RISK_LIMIT = 20


@dataclass(frozen=True)
class EconParams:
    """Quality-to-utility gain and the risk thresholds."""

    omega3: float = 7.0
    rho1: float = 0.2
    rho2: float = 0.2

    def __post_init__(self):
        if not self.omega3 > 0:
            raise ValueError("omega3 must be positive")
        for name in ("rho1", "rho2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")


def _check_zeta(zeta: float) -> None:
    if not 0 <= zeta < 1:
        raise ValueError(f"redundancy factor must lie in [0, 1), got {zeta}")


def aggregate_quality(qualities: Sequence[float], zeta: float) -> float:
    """Sum of precisions discounted by ``1 + (n - 1) * zeta``; 0 when nobody senses."""
    _check_zeta(zeta)
    n = len(qualities)
    if n == 0:
        return 0.0
    return float(sum(qualities)) / (1.0 + (n - 1) * zeta)


def aggregate_quality_batch(num: np.ndarray, n: np.ndarray, zeta: float) -> np.ndarray:
    """Vectorised :func:`aggregate_quality` from precision sums and head counts."""
    num = np.asarray(num, dtype=float)
    n = np.asarray(n, dtype=float)
    denom = 1.0 + (n - 1.0) * zeta
    out = np.zeros(np.broadcast(num, n).shape)
    np.divide(num, denom, out=out, where=n > 0)
    return out


def worker_cost(c_exe, lam, eps):
    """Execution cost plus privacy cost ``lam / eps``."""
    return np.asarray(c_exe) + np.asarray(lam) / np.asarray(eps)


def worker_utility(payments, costs, participation) -> float:
    p = np.asarray(payments, dtype=float)
    c = np.asarray(costs, dtype=float)
    x = np.asarray(participation, dtype=float)
    if not p.shape == c.shape == x.shape:
        raise ValueError("payments, costs and participation must have equal lengths")
    if x.size == 0:
        return 0.0
    return float(np.sum(x * (p - c)))


def task_utility(aggregated_q: float, payments_to_arrived, omega3: float) -> float:
    if aggregated_q < 0:
        raise ValueError("aggregated quality must be non-negative")
    return float(omega3 * aggregated_q - float(np.sum(payments_to_arrived)))


def social_welfare(task_utils, worker_utils) -> float:
    return float(np.sum(task_utils)) + float(np.sum(worker_utils))


def quality_risk(
    contracted: Sequence[tuple[float, float]],
    zeta: float,
    q_demand: float,
    method: str = "exact",
    M: int = 200,
    seed: int = 0,
) -> float:
    """Probability that the arrived subset of ``contracted`` misses ``q_demand``.

    ``contracted`` holds ``(q, pi)`` pairs.  ``method="exact"`` enumerates all
    arrival patterns (at most :data:`EXACT_RISK_LIMIT` workers); ``"monte_carlo"``
    draws ``M`` seeded arrival vectors.
    """
    _check_zeta(zeta)
    n = len(contracted)
    if n == 0:
        return 1.0 if q_demand > 0 else 0.0
    q = np.array([c[0] for c in contracted], dtype=float)
    pi = np.array([c[1] for c in contracted], dtype=float)
    if method == "exact":
        if n > EXACT_RISK_LIMIT:
            raise NotImplementedError(
                f"exact enumeration supports at most {EXACT_RISK_LIMIT} workers, got {n}"
            )
        risk = 0.0
        shifts = np.arange(n)
        chunk = 1 << 14
        for start in range(0, 1 << n, chunk):
            masks = np.arange(start, min(start + chunk, 1 << n))
            a = ((masks[:, None] >> shifts) & 1).astype(bool)
            prob = np.prod(np.where(a, pi, 1.0 - pi), axis=1)
            Q = aggregate_quality_batch(a @ q, a.sum(axis=1), zeta)
            risk += float(prob[Q < q_demand].sum())
        return min(max(risk, 0.0), 1.0)
    if method == "monte_carlo":
        if M < 1:
            raise ValueError("M must be at least 1")
        arrivals = stream(seed, "qrisk", 0).random((M, n)) < pi
        Q = aggregate_quality_batch(arrivals @ q, arrivals.sum(axis=1), zeta)
        return float(np.mean(Q < q_demand))
    raise ValueError(f"unknown method {method!r}")


def pref_risk(assignment_row, prior_row, num_tasks: int) -> float:
    """Expected intent-mismatch ratio of one worker under a factorised prior."""
    x = np.asarray(assignment_row, dtype=float)
    phi = np.asarray(prior_row, dtype=float)
    if x.shape != phi.shape:
        raise ValueError("assignment row and prior row must have equal lengths")
    if num_tasks < 1:
        raise ValueError("num_tasks must be positive")
    return float(np.sum(x * (1.0 - phi)) / num_tasks)
