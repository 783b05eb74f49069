import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iparts.market import ScenarioConfig, Worker, generate_scenario
from iparts.privacy import (INFEASIBLE, IntentState, PrivacyCaps, calibrate_workers,
                            collect_reports, eird, factorized_vector_prior,
                            inference_floor_check, intent_states, keep_probability,
                            lr_threshold_attack, mirror_report, multi_snapshot_attack,
                            one_snapshot_attack, one_snapshot_eie, primer_calibrate,
                            report_sequence, rr_likelihood, rr_perturb, vector_attack)
from iparts.rng import stream

eps_st = st.floats(0.01, 8.0)


def brute_eie(prior, eps, weights):
    """Bayes risk of entry-wise MAP by summing over every (truth, report) pair."""
    n = len(prior)
    keep = math.exp(eps) / (1 + math.exp(eps))
    vecs = list(itertools.product((0, 1), repeat=n))
    total = 0.0
    for r in vecs:
        joint = []
        for b in vecs:
            pb = math.prod(p if x else 1 - p for x, p in zip(b, prior))
            lr = math.prod(keep if x == y else 1 - keep for x, y in zip(b, r))
            joint.append(pb * lr)
        for k in range(n):
            p1 = sum(j for j, b in zip(joint, vecs) if b[k] == 1)
            p0 = sum(j for j, b in zip(joint, vecs) if b[k] == 0)
            total += weights[k] * min(p1, p0)
    return total


def test_keep_probability_values():
    assert keep_probability(math.log(3)) == pytest.approx(0.75)
    assert keep_probability(np.inf) == 1.0
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            keep_probability(bad)


@given(eps_st, st.lists(st.integers(0, 1), min_size=1, max_size=8),
       st.lists(st.integers(0, 1), min_size=8, max_size=8), st.integers(0, 7))
def test_likelihood_ratio_bounded_by_eps(eps, r, b, k):
    b = b[:len(r)]
    k %= len(r)
    b2 = list(b)
    b2[k] ^= 1
    ratio = rr_likelihood(r, b, eps) / rr_likelihood(r, b2, eps)
    assert ratio <= math.exp(eps) * (1 + 1e-12)
    assert ratio == pytest.approx(math.exp(eps)) or ratio == pytest.approx(math.exp(-eps))


def test_rr_perturb_checks_inputs():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        rr_perturb([0, 2], 1.0, rng)
    assert rr_perturb(1, np.inf, rng) == 1
    np.testing.assert_array_equal(rr_perturb(np.array([0, 1, 1]), np.inf, rng), [0, 1, 1])


def test_memoised_reports_repeat_within_epoch():
    st_ = IntentState(3, np.array([1, 0, 1, 1, 0, 0, 1, 0]), 0.5, seed=4, epoch_length=5)
    first = mirror_report(st_, 0)
    for t in range(1, 5):
        np.testing.assert_array_equal(mirror_report(st_, t), first)
    mirror_report(st_, 5)
    assert list(st_.memo) == [1]
    np.testing.assert_array_equal(mirror_report(st_, 0), first)


def test_report_sequence_matches_per_round_reports():
    truth = np.array([1, 0, 1, 0, 1, 1])
    for memoize in (True, False):
        seq = report_sequence(IntentState(2, truth, 0.7, seed=9, epoch_length=3,
                                          memoize=memoize), 11)
        fresh = IntentState(2, truth, 0.7, seed=9, epoch_length=3, memoize=memoize)
        for t in range(11):
            np.testing.assert_array_equal(seq[t], mirror_report(fresh, t))


def test_opted_out_worker_cannot_report():
    s = IntentState(0, np.array([1]), INFEASIBLE)
    with pytest.raises(RuntimeError):
        mirror_report(s, 0)


def test_eird():
    assert eird(math.log(3), 2.0, 4) == pytest.approx(2.0)
    assert eird(np.inf, 1.0, 4) == 0.0
    with pytest.raises(ValueError):
        eird(1.0, -1.0, 3)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4), eps_st,
       st.lists(st.floats(0.0, 3.0), min_size=4, max_size=4))
def test_eie_matches_enumeration(prior, eps, w):
    w = w[:len(prior)]
    assert one_snapshot_eie(prior, eps, w) == pytest.approx(brute_eie(prior, eps, w), abs=1e-9)


def test_eie_vanishing_budget_uniform_prior():
    assert one_snapshot_eie([0.5] * 3, 1e-9) == pytest.approx(1.5, abs=1e-6)


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6), eps_st,
       st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_vector_attack_agrees_with_entrywise_under_independence(prior, eps, r):
    r = np.array(r[:len(prior)])
    a = one_snapshot_attack(r, prior, eps)
    b = vector_attack(r, factorized_vector_prior(prior), eps)
    np.testing.assert_allclose(a.posterior_per_entry, b.posterior_per_entry, atol=1e-12)
    assert a.expected_error == pytest.approx(b.expected_error, abs=1e-12)


def test_vector_attack_uses_correlation():
    # perfectly correlated pair: a disagreeing report carries no information
    prior = np.array([0.5, 0.0, 0.0, 0.5])
    out = vector_attack(np.array([1, 0]), prior, 1.0)
    np.testing.assert_allclose(out.posterior_per_entry, [0.5, 0.5])


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5), eps_st)
def test_inference_floor_h_sums_to_eie(prior, eps):
    fc = inference_floor_check(prior, eps, None, 0.0)
    total = sum(fc.h(np.array(r)) for r in itertools.product((0, 1), repeat=len(prior)))
    assert total == pytest.approx(fc.total, abs=1e-10)
    assert fc.satisfied


def _worker(lo=0.1, hi=5.0):
    return Worker(0, (0.0, 0.0), (lo, hi), 50.0, 0.8, 0.5, 2.0, (0.0,) * 4)


def test_primer_default_budget():
    assert primer_calibrate(_worker(), PrivacyCaps(), 0.01, 20) == pytest.approx(0.85)


@given(st.floats(0.05, 2.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5),
       st.sampled_from([0.05, 0.1, 0.25]))
def test_primer_returns_smallest_feasible_grid_point(lo, qfrac, bfrac, step):
    n = 5
    caps = PrivacyCaps(Q_loss_max=qfrac * n, beta0=bfrac * n)
    w = _worker(lo, lo + 4.0)
    grid = [lo + k * step for k in range(int(math.floor(4.0 / step + 1e-9)) + 1)]

    def ok(e):
        flip = 1 / (1 + math.exp(e))
        return n * flip <= qfrac * n and n * flip >= bfrac * n

    expect = next((e for e in grid if ok(e)), None)
    got = primer_calibrate(w, caps, step, n)
    if expect is None:
        assert got is INFEASIBLE
    else:
        assert got == pytest.approx(expect)


def test_calibration_opt_out_and_zero_reports():
    s = generate_scenario(ScenarioConfig(n_tasks=3, n_workers=6), 0)
    eps = calibrate_workers(s, PrivacyCaps(Q_loss_max=0.0, beta0=0.0))
    assert np.all(np.isnan(eps))
    states = intent_states(s, eps, seed=0)
    assert not collect_reports(states, 0).any()


def test_collect_reports_reproducible(small_scenario):
    eps = calibrate_workers(small_scenario, PrivacyCaps())
    a = collect_reports(intent_states(small_scenario, eps, 1), 0)
    b = collect_reports(intent_states(small_scenario, eps, 1), 0)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (small_scenario.n_tasks, small_scenario.n_workers)


def test_multi_snapshot_and_lr_attacks():
    R = np.array([[1, 0, 1], [1, 0, 0], [0, 0, 1]])
    F, est = multi_snapshot_attack(R)
    np.testing.assert_allclose(F, [2 / 3, 0, 2 / 3])
    np.testing.assert_array_equal(est, [1, 0, 1])
    _, est_lr = lr_threshold_attack(R, 1.0, 0.5)
    np.testing.assert_array_equal(est_lr, est)
    with pytest.raises(ValueError):
        multi_snapshot_attack(np.zeros((0, 3)))


def test_fresh_reports_converge_to_truth_under_majority():
    truth = stream(0, "t", 0).integers(0, 2, 30)
    seq = report_sequence(IntentState(0, truth, 1.0, seed=1, memoize=False), 400)
    _, est = multi_snapshot_attack(seq)
    np.testing.assert_array_equal(est, truth)
