import numpy as np
import pytest

from iparts.baselines import VARIANTS, get_variant, greedy_contract, planning_reports, run_variant
from iparts.market import ScenarioConfig, generate_scenario
from iparts.metrics import audit_ir_and_risk
from iparts.privacy import PrivacyCaps, calibrate_workers


@pytest.fixture(scope="module")
def scenario():
    return generate_scenario(ScenarioConfig(n_tasks=8, n_workers=48), 2)


@pytest.mark.parametrize("name", sorted(VARIANTS))
def test_every_variant_runs_and_passes_its_audit(scenario, name):
    v = get_variant(name)
    run = run_variant(name, scenario)
    assert run.variant == name and run.runtime_s >= 0
    audit = audit_ir_and_risk(run.scenario, run.eps_star, run.reports, run.profile,
                              run.arrivals.alpha, run.recruits, risk_checks=v.risk_checks,
                              seed=run.seed, online_checks=v.online)
    assert audit.ok, audit.violations
    assert (run.online is not None) == v.online
    if not v.offline:
        assert not run.profile.contracted()


def test_unknown_variant():
    with pytest.raises(ValueError, match="unknown variant"):
        get_variant("Random")


def test_no_perturbation_reports_true_intents(scenario):
    eps = calibrate_workers(scenario, PrivacyCaps())
    r = planning_reports(scenario, eps, get_variant("NoP"), 0)
    active = ~np.isnan(eps)
    np.testing.assert_array_equal(r[:, active], scenario.true_intents[:, active])


def test_linear_quality_variant_plans_without_redundancy(scenario):
    run = run_variant("NoR", scenario)
    assert np.all(run.scenario.zetas == 0)
    assert run.original is scenario


def test_greedy_respects_budget_and_exclusivity(scenario):
    eps = calibrate_workers(scenario, PrivacyCaps())
    reports = planning_reports(scenario, eps, get_variant("iParts"), 0)
    prof = greedy_contract(scenario, reports, eps)
    seen = set()
    for i, a in enumerate(prof.sets):
        assert not (a & seen)
        seen |= a
        assert scenario.payments[i, sorted(a)].sum() <= scenario.tasks[i].budget + 1e-9
        assert all(reports[i, j] == 1 for j in a)


def test_shared_plan_for_identical_report_variants(scenario):
    a, b = run_variant("iParts", scenario), run_variant("ConOff", scenario)
    assert a.profile == b.profile
    assert b.recruits == {}
