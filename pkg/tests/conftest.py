import pytest
from hypothesis import HealthCheck, settings

from iparts.market import ScenarioConfig, generate_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the terminal summary prints them in order."""
    store = request.config.stash[_CRITERIA]

    def record(number: int, ok: bool, detail: str = "") -> None:
        store[number] = (bool(ok), detail)
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, detail = store[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_scenario():
    return generate_scenario(ScenarioConfig(n_tasks=4, n_workers=16), seed=3)


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(ScenarioConfig(), seed=0)
