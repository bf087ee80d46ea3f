import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from terrace_lab import nonlinearity as nl
from terrace_lab import pde, terrace

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Store one verdict line per acceptance criterion for the terminal summary."""
    def _record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def bistable_spec():
    return nl.bistable(0.25)


@pytest.fixture(scope="session")
def bistable_run(bistable_spec):
    """Heaviside run, coarse enough for unit tests (about 5 s)."""
    params = terrace.default_sim_params(bistable_spec)
    params.update({"xmin": -60.0, "xmax": 100.0, "dx": 0.1, "dt": 0.01, "t_end": 150.0})
    return terrace.run_heaviside(bistable_spec, params)


@pytest.fixture(scope="session")
def bistable_terrace(bistable_spec, bistable_run):
    return terrace.extract_terrace(bistable_spec, {"dx": 0.1, "dt": 0.01}, traj=bistable_run)


@pytest.fixture(scope="session")
def analytic_wave():
    """Exact cubic-bistable wave for a = 0.25 sampled on [-40, 40]."""
    from terrace_lab.odeperiodic import PeriodicSolution

    c = 0.5 / np.sqrt(2.0)
    xi = np.arange(-800, 801) * 0.05
    prof = 1.0 / (1.0 + np.exp(xi / np.sqrt(2.0)))
    return terrace.WaveProfile(c, 1.0, xi, [0.0], prof[None, :], PeriodicSolution.constant(1.0, 1.0),
                               PeriodicSolution.constant(0.0, 1.0))


@pytest.fixture
def small_grid():
    return pde.Grid.from_spacing(-10.0, 10.0, 0.1)


@pytest.fixture(scope="session")
def quintic_spec():
    return nl.quintic(0.05, 0.5, 0.75, kappa=5.0)


@pytest.fixture(scope="session")
def quintic_run(quintic_spec):
    """Two-front Heaviside run on a coarse grid."""
    params = terrace.default_sim_params(quintic_spec)
    params.update({"xmin": -40.0, "xmax": 120.0, "dx": 0.1, "dt": 0.01, "t_end": 120.0})
    return terrace.run_heaviside(quintic_spec, params)
