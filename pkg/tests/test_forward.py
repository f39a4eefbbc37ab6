import json

import numpy as np
import pytest

from robustmfc.forward import Metrics, Trajectory, cost, dump_csv, dump_metrics_json, simulate, simulate_open_loop
from robustmfc.model import ModelParams
from robustmfc.riccati import solve_backward


def zeros_like_grid(params):
    return np.zeros(params.n_steps + 1)


def test_open_loop_variance_fixed_point(baseline_params):
    p = baseline_params.replace(T=50.0)
    z = zeros_like_grid(p)
    traj = simulate_open_loop(p, z, z, z, z)
    assert abs(traj.metrics.v_T - 0.5) <= 1e-3


def test_open_loop_zero_inputs_mean_constant(baseline_params):
    z = zeros_like_grid(baseline_params)
    traj = simulate_open_loop(baseline_params, z, z, z, z)
    assert np.all(traj.m == baseline_params.m0)


def test_open_loop_constant_theta_drift(baseline_params):
    p = baseline_params
    z = zeros_like_grid(p)
    c = 0.07
    traj = simulate_open_loop(p, z, z, np.full(p.n_steps + 1, c), z)
    assert traj.metrics.m_T == pytest.approx(p.m0 + c * p.T, abs=c * p.dt)


def test_open_loop_rejects_out_of_bounds_controls(baseline_params):
    p = baseline_params
    z = zeros_like_grid(p)
    with pytest.raises(ValueError, match="u_path"):
        simulate_open_loop(p, np.full(p.n_steps + 1, 2.0), z, z, z)
    with pytest.raises(ValueError, match="pi_path"):
        simulate_open_loop(p, z, np.full(p.n_steps + 1, -0.1), z, z)


def test_cost_zero_paths(baseline_params):
    t = np.zeros(3)
    traj = Trajectory(times=t, m=t, v=t, u=t, pi=t, theta=t, xi=t, metrics=None)
    J, J_pen = cost(traj, baseline_params)
    assert J == 0.0 and J_pen == 0.0


def test_cost_single_step_toy(baseline_params):
    p = baseline_params.replace(dt=1.0, T=1.0)  # cost() reads only dt
    traj = Trajectory(times=np.array([0.0, 1.0]),
                      m=np.array([1.0, 0.0]), v=np.array([1.0, 0.0]),
                      u=np.array([0.5, 0.5]), pi=np.array([0.2, 0.2]),
                      theta=np.zeros(2), xi=np.zeros(2), metrics=None)
    J, J_pen = cost(traj, p)
    assert J == pytest.approx(0.76, abs=1e-15)
    assert J_pen == J


def test_cost_penalty_sign(baseline_traj, baseline_params):
    J, J_pen = cost(baseline_traj, baseline_params)
    assert J_pen <= J
    assert baseline_traj.metrics.J == J
    assert baseline_traj.metrics.J_pen == J_pen


def test_baseline_initial_controls(baseline_traj):
    assert -0.45 <= baseline_traj.u[0] <= -0.15
    assert 0.7 <= baseline_traj.pi[0] <= 1.3


def test_baseline_over_monitoring(baseline_traj):
    hit = (baseline_traj.v == 0.0) & (baseline_traj.pi > 0.05)
    assert np.any(hit)


def test_strong_adversary_equilibrium(baseline_params):
    p = baseline_params.replace(lambda_m=0.15, lambda_v=0.15)
    traj = simulate(p, solve_backward(p))
    mt = traj.metrics
    assert mt.v_T > 0.01
    resid = abs(-2 * p.beta * mt.v_T + p.sigma_sq + traj.xi[-1] - p.chi * traj.pi[-1])
    assert resid < 0.05


def test_halving_dt_changes_cost_below_one_percent(baseline_params, baseline_traj):
    p = baseline_params.replace(dt=0.0005)
    J_half = simulate(p, solve_backward(p)).metrics.J
    assert abs(J_half - baseline_traj.metrics.J) / baseline_traj.metrics.J < 0.01


def test_variance_floor_everywhere(baseline_params):
    for changes in ({}, {"chi": 2.0}, {"lambda_v": 0.1}, {"beta": 0.05, "chi": 1.5}):
        p = baseline_params.replace(**changes)
        traj = simulate(p, solve_backward(p))
        assert np.all(traj.v >= 0.0)


def test_zero_adversary_distortions_vanish(baseline_params):
    p = baseline_params.replace(lambda_m=0.0, lambda_v=0.0)
    traj = simulate(p, solve_backward(p))
    assert np.all(traj.theta == 0.0)
    assert np.all(traj.xi == 0.0)
    assert traj.metrics.theta_peak == 0.0 and traj.metrics.xi_peak == 0.0


def test_metric_bounds_and_peaks(baseline_traj):
    mt = baseline_traj.metrics
    assert 0.0 <= mt.S_u <= 1.0 and 0.0 <= mt.S_pi <= 1.0
    assert mt.theta_peak == np.max(np.abs(baseline_traj.theta))
    assert mt.xi_peak == np.max(np.abs(baseline_traj.xi))
    assert mt.J >= 0.0


def test_trajectory_bounds_and_lengths(baseline_traj, baseline_params):
    p = baseline_params
    n = p.n_steps
    for arr in (baseline_traj.m, baseline_traj.v, baseline_traj.u,
                baseline_traj.pi, baseline_traj.theta, baseline_traj.xi):
        assert len(arr) == n + 1
    assert np.all(baseline_traj.u >= p.u_min) and np.all(baseline_traj.u <= p.u_max)
    assert np.all(baseline_traj.pi >= 0.0) and np.all(baseline_traj.pi <= p.pi_max)


def test_simulation_is_deterministic(baseline_params, baseline_sol, baseline_traj):
    again = simulate(baseline_params, baseline_sol)
    np.testing.assert_array_equal(again.m, baseline_traj.m)
    np.testing.assert_array_equal(again.v, baseline_traj.v)
    np.testing.assert_array_equal(again.u, baseline_traj.u)
    assert again.metrics == baseline_traj.metrics


def test_simulate_rejects_blowup_solution(baseline_params):
    blown = solve_backward(baseline_params.replace(lambda_m=0.5))
    with pytest.raises(ValueError, match="bounded"):
        simulate(baseline_params.replace(lambda_m=0.5), blown)


def test_simulate_with_denser_backward_grid(baseline_params, baseline_traj):
    # a denser (misaligned) backward grid interpolates and stays close
    sol = solve_backward(baseline_params, n_nodes=2 * baseline_params.n_steps + 1)
    traj = simulate(baseline_params, sol)
    np.testing.assert_allclose(traj.m, baseline_traj.m, atol=1e-8)
    np.testing.assert_allclose(traj.v, baseline_traj.v, atol=1e-8)


def test_dumps(tmp_path, baseline_traj):
    csv_path = tmp_path / "trajectory.csv"
    dump_csv(baseline_traj, str(csv_path))
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,m,v,u,pi,theta,xi"
    assert len(lines) == len(baseline_traj.times) + 1

    json_path = tmp_path / "metrics.json"
    dump_metrics_json(baseline_traj.metrics, str(json_path))
    loaded = json.loads(json_path.read_text())
    assert set(loaded) == {"J", "J_pen", "m_T", "v_T", "u_bar", "pi_bar",
                           "theta_peak", "xi_peak", "S_u", "S_pi"}
    assert loaded["J"] == baseline_traj.metrics.J
