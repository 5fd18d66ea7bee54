import warnings

import pytest

from bfstar import CanmConfig, ModelParams, solve


REFERENCE = ModelParams(gamma=0.1, Lambda=10.0, b=1.0, sigma_c=0.4, mu_c=1.2)
PURE = ModelParams(gamma=0.1, Lambda=10.0, b=1.0, sigma_c=0.0, mu_c=1.2)


@pytest.fixture(scope="session")
def reference_params():
    return REFERENCE


@pytest.fixture(scope="session")
def reference_solution():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        return solve(REFERENCE, CanmConfig())


@pytest.fixture(scope="session")
def pure_solution():
    return solve(PURE, CanmConfig())


@pytest.fixture(scope="session")
def reference_oracle(reference_solution):
    from bfstar.oracle import shoot_solve

    return shoot_solve(REFERENCE, reference_solution)


# criterion number -> (PASS/FAIL, one-line detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}")
