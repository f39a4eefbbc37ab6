import numpy as np
import pytest

from robustmfc.particle import (
    _bank_generators,
    poc_experiment,
    simulate_nbank,
    write_poc_csv,
    write_poc_summary,
)


def zeros(params):
    return np.zeros(params.n_steps + 1)


def test_deterministic_identical_banks(baseline_params):
    p = baseline_params.replace(sigma_L=0.0, sigma_c=0.0, v0=0.0)
    z = zeros(p)
    ens = simulate_nbank(p, 8, 1, z, z, with_coupled_limit=True)
    assert np.all(ens.m_emp == p.m0)
    assert np.all(ens.v_emp == 0.0)
    assert np.all(ens.coupled_limit.sup_gap == 0.0)


def test_common_noise_cancels_in_cross_section(baseline_params):
    p = baseline_params.replace(sigma_L=0.0, v0=0.0)
    z = zeros(p)
    ens = simulate_nbank(p, 6, 3, z, z)
    # identical bank values; np.var leaves only mean-rounding dust ~ ulp^2
    assert np.max(ens.v_emp) < 1e-30
    assert np.std(ens.m_emp) > 0.0        # the common shock does move the mean


def test_seed_determinism(baseline_params, baseline_traj):
    p = baseline_params.replace(dt=0.01)
    u, th = baseline_traj.u[::10], baseline_traj.theta[::10]
    a = simulate_nbank(p, 32, 99, u, th, with_coupled_limit=True)
    b = simulate_nbank(p, 32, 99, u, th, with_coupled_limit=True)
    np.testing.assert_array_equal(a.m_emp, b.m_emp)
    np.testing.assert_array_equal(a.v_emp, b.v_emp)
    np.testing.assert_array_equal(a.L_final, b.L_final)
    np.testing.assert_array_equal(a.coupled_limit.sup_gap, b.coupled_limit.sup_gap)
    c = simulate_nbank(p, 32, 100, u, th)
    assert not np.array_equal(a.m_emp, c.m_emp)


def test_exchangeability_under_stream_permutation(baseline_params, baseline_traj):
    p = baseline_params.replace(dt=0.01)
    u, th = baseline_traj.u[::10], baseline_traj.theta[::10]
    N = 16
    base = simulate_nbank(p, N, 42, u, th)
    banks, common = _bank_generators(42, N)
    perm = np.random.default_rng(1).permutation(N)
    permuted = simulate_nbank(p, N, 42, u, th,
                              _generators=([banks[i] for i in perm], common))
    np.testing.assert_allclose(permuted.m_emp, base.m_emp, rtol=0, atol=1e-12)
    np.testing.assert_allclose(permuted.v_emp, base.v_emp, rtol=0, atol=1e-12)


def test_empirical_variance_nonnegative(baseline_params, baseline_traj):
    p = baseline_params.replace(dt=0.01)
    ens = simulate_nbank(p, 64, 5, baseline_traj.u[::10], baseline_traj.theta[::10])
    assert np.all(ens.v_emp >= 0.0)


def test_large_system_tracks_conditional_mean(baseline_params, baseline_traj):
    ens = simulate_nbank(baseline_params, 4096, 314, baseline_traj.u,
                         baseline_traj.theta, with_coupled_limit=True,
                         m_ref=baseline_traj.m)
    gap = np.max(np.abs(ens.m_emp - ens.coupled_limit.m_cond))
    assert gap < 0.1


def test_nbank_contract_violations(baseline_params):
    z = zeros(baseline_params)
    with pytest.raises(ValueError, match="N must be at least 2"):
        simulate_nbank(baseline_params, 1, 0, z, z)
    with pytest.raises(ValueError, match="length"):
        simulate_nbank(baseline_params, 4, 0, z[:-5], z)


def test_poc_zero_noise_zero_errors(baseline_params):
    p = baseline_params.replace(sigma_L=0.0, sigma_c=0.0, v0=0.0, dt=0.01)
    res = poc_experiment(p, [2, 4], replications=1, seed=0)
    for row in res.rows:
        assert row.coupling_err == 0.0
        assert row.mean_err == 0.0


def test_poc_errors_shrink_with_N(baseline_params):
    p = baseline_params.replace(dt=0.01)
    res = poc_experiment(p, [64, 256, 1024], replications=6, seed=7)
    med = {N: np.median([r.coupling_err for r in res.rows if r.N == N])
           for N in res.N_list}
    assert med[256] < med[64]
    assert med[1024] < med[256]
    assert -0.75 <= res.slope <= -0.25
    assert res.slope_half_width > 0.0


def test_poc_contracts(baseline_params):
    with pytest.raises(ValueError, match="increasing"):
        poc_experiment(baseline_params, [64, 64], 1, 0)
    with pytest.raises(ValueError, match="replications"):
        poc_experiment(baseline_params, [4, 8], 0, 0)


def test_poc_outputs(tmp_path, baseline_params):
    p = baseline_params.replace(dt=0.01)
    res = poc_experiment(p, [8, 32], replications=2, seed=11)
    csv = tmp_path / "poc.csv"
    write_poc_csv(res, str(csv))
    lines = csv.read_text().splitlines()
    assert lines[0] == "N,replication,coupling_err,mean_err,var_err,mean_err_det,var_err_det"
    assert len(lines) == 1 + 4

    import json
    summary = tmp_path / "poc.json"
    write_poc_summary(res, str(summary))
    doc = json.loads(summary.read_text())
    assert doc["N_list"] == [8, 32]
    assert "slope" in doc and "reference_note" in doc
