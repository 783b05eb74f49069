import numpy as np
import pytest

from iparts.baselines import run_variant
from iparts.market import ScenarioConfig, generate_scenario
from iparts.metrics import (audit_ir_and_risk, interaction_metrics, link_tables, privacy_metrics,
                            summarize, welfare_metrics)
from iparts.offline_game import ContractProfile, contract_costs
from iparts.privacy import PrivacyCaps, calibrate_workers


def test_welfare_metrics_by_hand():
    s = generate_scenario(ScenarioConfig(n_tasks=2, n_workers=5, quality_demand=(5.0, 6.0)), 0)
    eps = calibrate_workers(s, PrivacyCaps())
    cost = contract_costs(s, eps)
    profile = ContractProfile.from_lists([[0, 1], [2]])
    alpha = np.array([1, 0, 0, 1, 1])
    recruits = {1: frozenset({3})}
    w3 = s.econ.omega3
    tu = w3 * s.quality[0, 0] - s.payments[0, 0] + w3 * s.quality[1, 3] - s.payments[1, 3]
    wu = (s.payments[0, 0] - cost[0, 0]) + (s.payments[1, 3] - cost[1, 3])
    got = welfare_metrics(s, profile, alpha, recruits, eps)
    assert got["TU"] == pytest.approx(tu)
    assert got["WU"] == pytest.approx(wu)
    assert got["SW"] == pytest.approx(tu + wu)
    done = int(s.quality[0, 0] >= s.demands[0]) + int(s.quality[1, 3] >= s.demands[1])
    assert got["TCR"] == pytest.approx(done / 2)


def test_interaction_metrics_count_downlink_exchanges():
    t = link_tables(3, 2, 4)
    log = [("off", 0, 1, 2, "down", 96), ("off", 0, 1, 2, "up", 32),
           ("on", 1, 0, 3, "down", 48), ("on", 1, 0, 3, "up", 16),
           ("on", 2, 0, 3, "down", 48)]
    m = interaction_metrics(log, t)
    assert m["NI"] == 3
    il = (t.t_up[1, 2] + t.t_down[1, 2]) + 2 * (t.t_up[0, 3] + t.t_down[0, 3])
    assert m["IL_ms"] == pytest.approx(il)
    e = lambda i, j: t.e_task[i, j] * t.t_down[i, j] + t.e_worker[i, j] * t.t_up[i, j]
    assert m["IEC_mJ"] == pytest.approx(e(1, 2) + 2 * e(0, 3))
    np.testing.assert_array_equal(link_tables(3, 2, 4).t_up, t.t_up)
    np.testing.assert_array_equal(link_tables(3, 2, 6).t_up[:, :4], t.t_up)


def test_privacy_metrics_without_perturbation_reveal_everything(small_scenario):
    eps = calibrate_workers(small_scenario, PrivacyCaps())
    out = privacy_metrics(small_scenario, eps, (1, 5), 2, seed=0, perturb=False)
    assert out["OSR"] == 1.0 and out["MSR"] == [1.0, 1.0] and out["MFL"] == [0.0, 0.0]
    assert out["OeIE"] == 0.0


def test_privacy_metrics_perturbed_ranges(small_scenario):
    eps = calibrate_workers(small_scenario, PrivacyCaps())
    out = privacy_metrics(small_scenario, eps, (1, 20), 5, seed=1)
    assert 0 <= out["OSR"] <= 1 and 0 < out["OeIE"]
    assert out["MSR_by_replication"].shape == (5, 2)
    with pytest.raises(ValueError):
        privacy_metrics(small_scenario, eps, (0,))
    with pytest.raises(ValueError):
        privacy_metrics(small_scenario, eps, (1,), attacker="oracle")


def test_audit_catches_injected_violations():
    run = run_variant("iParts", generate_scenario(ScenarioConfig(), 0))
    a = run.arrivals.alpha
    clean = audit_ir_and_risk(run.scenario, run.eps_star, run.reports, run.profile, a,
                              run.recruits, seed=run.seed)
    assert clean.ok, clean.violations
    sets = [set(x) for x in run.profile.sets]
    filled = [i for i, x in enumerate(sets) if x]
    i0, i1 = filled[0], filled[1]
    sets[i1].add(next(iter(sets[i0])))
    dup = ContractProfile.from_lists(sets)
    kinds = {v[0] for v in audit_ir_and_risk(run.scenario, run.eps_star, run.reports, dup, a,
                                             {}, seed=run.seed).violations}
    assert "exclusivity" in kinds
    over = ContractProfile.from_lists([list(range(run.scenario.n_workers))]
                                      + [[] for _ in range(run.scenario.n_tasks - 1)])
    kinds = {v[0] for v in audit_ir_and_risk(run.scenario, run.eps_star, run.reports, over, a,
                                             {}, seed=run.seed).violations}
    assert "budget" in kinds
    i = next(iter(run.state.unmet_tasks))
    busy = next(iter(run.profile.contracted()))
    kinds = {v[0] for v in audit_ir_and_risk(run.scenario, run.eps_star, run.reports, run.profile,
                                             a, {i: frozenset({busy})}, seed=run.seed).violations}
    assert "on_exclusivity" in kinds


def test_audit_flags_mismatch_risk_in_two_task_market():
    s = generate_scenario(ScenarioConfig(n_tasks=2, n_workers=4), 0)
    eps = calibrate_workers(s, PrivacyCaps())
    prof = ContractProfile.from_lists([[0], []])
    out = audit_ir_and_risk(s, eps, np.ones((2, 4)), prof, np.ones(4), {}, seed=0)
    assert ("prisk", "worker", 0) in out.violations
    skipped = audit_ir_and_risk(s, eps, np.ones((2, 4)), prof, np.ones(4), {},
                                risk_checks=False)
    assert "prisk" not in skipped.checked


def test_summarize():
    rows = [{"algorithm": "A", "n_workers": 1, "x": 1.0}, {"algorithm": "A", "n_workers": 1, "x": 3.0},
            {"algorithm": "B", "n_workers": 1, "x": 5.0}]
    out = summarize(rows, ["x"])
    assert out[0]["x_mean"] == 2.0 and out[0]["x_std"] == pytest.approx(np.sqrt(2))
    assert out[0]["x_se"] == pytest.approx(1.0)
    assert out[1]["runs"] == 1 and out[1]["x_std"] == 0.0
