import json

import numpy as np
import pytest

from robustmfc.experiments import (
    adversary_sweep,
    asymmetric_cases,
    default_grid,
    loss_map,
    parameter_sensitivity,
    saturation_layer,
    tradeoff_grid,
    write_sweep_csv,
    write_sweep_sidecar,
)
from robustmfc.forward import METRIC_FIELDS, simulate
from robustmfc.riccati import solve_backward


@pytest.fixture(scope="module")
def small_adversary(baseline_params):
    return adversary_sweep(baseline_params, np.linspace(0.0, 0.2, 9))


def test_adversary_cost_nondecreasing(small_adversary):
    J = [c.J for c in small_adversary.cells]
    assert all(b >= a * (1 - 0.005) for a, b in zip(J, J[1:]))


def test_adversary_zero_cell_has_no_distortions(small_adversary):
    zero = small_adversary.cell(0)
    assert small_adversary.axes[0][0] == 0.0
    assert zero.theta_peak == 0.0 and zero.xi_peak == 0.0


def test_adversary_no_saturation(small_adversary):
    assert not np.any(small_adversary.breakdown_mask)
    for c in small_adversary.cells:
        assert c.S_u == 0.0 and c.S_pi == 0.0


def test_adversary_masks_unstable_values(baseline_params):
    res = adversary_sweep(baseline_params, np.array([0.02, 0.30]))
    assert not res.breakdown_mask[0]
    assert res.breakdown_mask[1]          # 4*0.30 > chi^2/R = 1.0
    assert res.cell(1) is None


def test_asymmetric_cases(baseline_params):
    got = dict()
    for (lm, lv), cell in asymmetric_cases(baseline_params):
        assert cell is not None           # all four stay inside the margins
        got[(lm, lv)] = cell
    assert got[(0.001, 0.2)].J > got[(0.2, 0.001)].J


def test_asymmetric_near_zero_matches_zero_run(baseline_params):
    [(_, near)] = asymmetric_cases(baseline_params, cases=[(0.001, 0.001)])
    p0 = baseline_params.replace(lambda_m=0.0, lambda_v=0.0)
    zero = simulate(p0, solve_backward(p0)).metrics
    assert near.J == pytest.approx(zero.J, rel=0.01)
    assert near.v_T == pytest.approx(zero.v_T, rel=0.01, abs=1e-4)


@pytest.fixture(scope="module")
def small_tradeoff(baseline_params):
    grid = np.array([0.005, 0.02, 0.05, 0.1, 0.15])
    return tradeoff_grid(baseline_params, grid, grid)


def test_tradeoff_vT_rises_with_lambda_v(small_tradeoff):
    xs = small_tradeoff.xsec_lambda_v
    vt = [c.v_T for c in xs.cells]
    assert all(b >= a * (1 - 0.005) for a, b in zip(vt, vt[1:]))


def test_tradeoff_controls_decline_with_lambda_m(small_tradeoff):
    xs = small_tradeoff.xsec_lambda_m
    u = [c.u_bar for c in xs.cells]
    pi = [c.pi_bar for c in xs.cells]
    assert all(b <= a + 0.01 * abs(a) for a, b in zip(u, u[1:]))
    assert all(b <= a * (1 + 0.01) for a, b in zip(pi, pi[1:]))


def test_tradeoff_corner_has_minimum_cost(small_tradeoff):
    Jgrid = small_tradeoff.grid.metric_grid("J")
    assert Jgrid[0, 0] <= np.nanmin(Jgrid) * (1 + 1e-9)


def test_tradeoff_cross_sections_are_grid_cells(small_tradeoff):
    g = small_tradeoff.grid
    j = int(np.argmin(np.abs(g.axes[1] - small_tradeoff.xsec_at)))
    for i in range(len(g.axes[0])):
        assert small_tradeoff.xsec_lambda_m.cells[i] is g.cell(i, j)
    i = int(np.argmin(np.abs(g.axes[0] - small_tradeoff.xsec_at)))
    for jj in range(len(g.axes[1])):
        assert small_tradeoff.xsec_lambda_v.cells[jj] is g.cell(i, jj)


def test_parameter_sensitivity_chi(baseline_params, baseline_traj):
    res = parameter_sensitivity(baseline_params, "chi",
                                np.array([0.1, 0.5, 3.5, 6.0]))
    assert res.breakdown_mask[0]                  # below sqrt(4 lambda_v R) ~ 0.1414
    assert res.cell(0) is None
    assert res.cell(1) == baseline_traj.metrics   # no-op sweep point, bit-equal
    assert res.cell(2).S_u > 0.0                  # rate saturates first
    assert res.cell(3).S_pi > 0.0                 # then monitoring


def test_parameter_sensitivity_rejects_unknown(baseline_params):
    with pytest.raises(ValueError):
        parameter_sensitivity(baseline_params, "m0", np.array([0.1]))


def test_default_grid_brackets_baseline(baseline_params):
    g = default_grid(baseline_params, "chi", 25)
    assert len(g) == 25
    assert g[0] == pytest.approx(0.2) and g[-1] == pytest.approx(0.8)
    assert np.any(np.isclose(g, baseline_params.chi))


@pytest.fixture(scope="module")
def small_loss_map(baseline_params):
    return loss_map(baseline_params, np.array([0.1, 0.5, 2.0]),
                    np.array([0.0125, 0.25]))


def test_loss_map_masks_weak_monitoring(small_loss_map, baseline_params):
    thresh = np.sqrt(4 * baseline_params.lambda_v * baseline_params.R)
    for i, chi in enumerate(small_loss_map.axes[0]):
        for j in range(2):
            assert small_loss_map.breakdown_mask[i, j] == (chi <= thresh)


def test_loss_map_baseline_cell_interior(small_loss_map):
    cell = small_loss_map.cell(1, 1)      # (chi, beta) = (0.5, 0.25)
    assert cell is not None
    assert cell.S_u + cell.S_pi == 0.0


def test_loss_map_saturation_at_high_chi_low_beta(small_loss_map):
    layer = saturation_layer(small_loss_map)
    assert np.isnan(layer[0, 0])
    assert layer[2, 0] > 0.0              # chi = 2.0, beta = 0.0125
    assert layer[2, 0] <= 2.0
    assert layer[2, 0] >= layer[2, 1]     # saturation grows as beta falls


def test_csv_round_trip_and_sentinel(tmp_path, small_loss_map):
    path = tmp_path / "loss_map.csv"
    write_sweep_csv(small_loss_map, str(path))
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["chi", "beta"]
    assert len(lines) == 1 + 6
    masked = [l for l in lines[1:] if l.endswith(",true")]
    assert len(masked) == 2
    assert all("breakdown" in l for l in masked)

    # byte determinism
    path2 = tmp_path / "again.csv"
    write_sweep_csv(small_loss_map, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_sweep_recompute_yields_identical_csv(tmp_path, baseline_params):
    grid = np.array([0.0, 0.1])
    a = adversary_sweep(baseline_params, grid)
    b = adversary_sweep(baseline_params, grid)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(a, str(pa))
    write_sweep_csv(b, str(pb))
    assert pa.read_bytes() == pb.read_bytes()


def test_sidecar_contents(tmp_path, small_loss_map):
    path = tmp_path / "sweep.provenance.json"
    write_sweep_sidecar(small_loss_map, str(path), "loss-map", 1.23)
    doc = json.loads(path.read_text())
    assert doc["command"] == "loss-map"
    assert doc["params"]["beta"] == 0.25
    assert doc["swept"] == ["chi", "beta"]
    assert doc["wall_time_s"] == 1.23
    assert "version" in doc


def test_worker_pool_matches_serial(baseline_params):
    grid = np.array([0.0, 0.05, 0.1])
    serial = adversary_sweep(baseline_params, grid, workers=1)
    pooled = adversary_sweep(baseline_params, grid, workers=2)
    assert serial.cells == pooled.cells


def test_metric_grid_shape(small_loss_map):
    J = small_loss_map.metric_grid("J")
    assert J.shape == (3, 2)
    assert np.isnan(J[0, 0]) and not np.isnan(J[1, 1])
