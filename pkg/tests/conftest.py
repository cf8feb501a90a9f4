import pytest

from lagoon_orbits.guards import build_rect
from lagoon_orbits.model import ModelParams
from lagoon_orbits.periodic import continuation_path, default_schedule, shoot

# (criterion number, passed, detail) collected by the acceptance tests
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}

# eps values of the degree/sign configurations
CONFIG_EPS = (0.3, 0.05, 0.01)
CONFIG_N = (0.0, 0.05, 0.1)
# continuation grid reaching every eps in CONFIG_EPS
CONFIG_SCHEDULE = (0.3, 0.15, 0.1, 0.075, 0.05, 0.0375, 0.025, 0.0175, 0.01)


@pytest.fixture(scope="session")
def corollary():
    return ModelParams.preset("corollary")


@pytest.fixture(scope="session")
def orbit_03(corollary):
    return shoot(build_rect(0.3, corollary).center, 0.3, corollary)


@pytest.fixture(scope="session")
def orbit_path(orbit_03, corollary):
    """Stages of the default continuation from eps = 0.3 to eps = 0 (N = 0.1)."""
    return continuation_path(orbit_03, default_schedule(), corollary,
                             final_opts=_final_opts())


@pytest.fixture(scope="session")
def config_orbits():
    """Periodic orbits at every (N, eps) configuration, keyed by (N, eps)."""
    out = {}
    for N in CONFIG_N:
        params = ModelParams.preset(N=N)
        start = shoot(build_rect(0.3, params).center, 0.3, params)
        for stage in continuation_path(start, CONFIG_SCHEDULE, params):
            if stage.eps in CONFIG_EPS:
                out[N, stage.eps] = stage
    return out


def _final_opts():
    from lagoon_orbits.ode import IntegratorOptions
    from lagoon_orbits.periodic import ShootingOptions

    return ShootingOptions(integrator=IntegratorOptions(rtol=1e-12, atol=1e-12))


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
