import pytest

from robustmfc import ModelParams, simulate, solve_backward


@pytest.fixture(scope="session")
def baseline_params() -> ModelParams:
    return ModelParams()


@pytest.fixture(scope="session")
def baseline_sol(baseline_params):
    return solve_backward(baseline_params)


@pytest.fixture(scope="session")
def baseline_traj(baseline_params, baseline_sol):
    return simulate(baseline_params, baseline_sol)
