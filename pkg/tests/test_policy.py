import numpy as np
import pytest

from robustmfc.policy import ValueGradient, feedback, gradient, value, worst_case
from robustmfc.riccati import RiccatiCoeffs, terminal_coeffs

ZERO = RiccatiCoeffs(0, 0, 0, 0, 0, 0)


def test_value_zero_coefficients():
    assert value(ZERO, 3.7, -2.1) == 0.0


def test_value_terminal_coefficients(baseline_params):
    c = terminal_coeffs(baseline_params)
    assert value(c, 0.5, 1.0) == pytest.approx(0.625, abs=1e-15)


def test_value_linear_term_only():
    assert value(RiccatiCoeffs(0, 1, 0, 0, 0, 0), 3.0, 7.0) == 3.0


def test_gradient_terminal(baseline_params):
    g = gradient(terminal_coeffs(baseline_params), 0.5, 1.0)
    assert g == (0.5, 0.5)
    assert gradient(ZERO, 1.0, 2.0) == (0.0, 0.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(40):
        c = RiccatiCoeffs(*rng.normal(scale=1.0, size=6))
        m = float(rng.uniform(-5, 5))
        v = float(rng.uniform(0, 5))
        g = gradient(c, m, v)
        fd_m = (value(c, m + h, v) - value(c, m - h, v)) / (2 * h)
        fd_v = (value(c, m, v + h) - value(c, m, v - h)) / (2 * h)
        assert fd_m == pytest.approx(g.q_m, rel=1e-6, abs=1e-9)
        assert fd_v == pytest.approx(g.q_v, rel=1e-6, abs=1e-9)


def test_feedback_interior_baseline(baseline_params):
    fb = feedback(ValueGradient(0.5, 0.5), 1.0, baseline_params)
    assert fb.u == pytest.approx(-0.45, abs=1e-15)
    assert fb.pi == pytest.approx(0.5, abs=1e-15)
    assert not fb.u_saturated and not fb.pi_saturated


def test_feedback_clamps_and_flags(baseline_params):
    # u_fb = -1.7 needs eta*q_m + kappa*v = 1.7
    fb = feedback(ValueGradient((1.7 - 0.05) / 0.8, 0.5), 1.0, baseline_params)
    assert fb.u == -1.0 and fb.u_saturated

    fb2 = feedback(ValueGradient(0.0, -0.3), 0.0, baseline_params)
    assert fb2.pi == 0.0 and fb2.pi_saturated


def test_feedback_bound_ties_not_saturated(baseline_params):
    # exactly representable tie: eta = 1, kappa = 0, q_m = 1 -> u_fb = u_min = -1
    p = baseline_params.replace(eta=1.0, kappa=0.0)
    fb = feedback(ValueGradient(1.0, 0.0), 1.0, p)
    assert fb.u == p.u_min and not fb.u_saturated
    assert fb.pi == 0.0 and not fb.pi_saturated


def test_projection_idempotent_on_admissible(baseline_params):
    rng = np.random.default_rng(5)
    for _ in range(50):
        q_m = float(rng.uniform(-1, 1))
        v = float(rng.uniform(0, 3))
        fb = feedback(ValueGradient(q_m, float(rng.uniform(0, 4))), v, baseline_params)
        if not fb.u_saturated and not fb.pi_saturated:
            again = feedback(ValueGradient(q_m, fb.pi * 2 * baseline_params.R
                                           / baseline_params.chi), v, baseline_params)
            assert again.u == fb.u


def test_ufb_strictly_decreasing_in_v(baseline_params):
    g = ValueGradient(0.1, 0.2)
    us = [feedback(g, v, baseline_params).u for v in (0.0, 0.5, 1.0, 2.0)]
    assert all(b < a for a, b in zip(us, us[1:]))


def test_worst_case_values(baseline_params):
    d = worst_case(ValueGradient(0.5, 0.5), baseline_params)
    assert d.theta == pytest.approx(0.02, abs=1e-15)
    assert d.xi == pytest.approx(0.02, abs=1e-15)
    z = worst_case(ValueGradient(0.4, -0.7),
                   baseline_params.replace(lambda_m=0.0, lambda_v=0.0))
    assert z == (0.0, 0.0)


def test_entropy_dual_grid_search():
    # sup_z { z q - z^2/(4 lambda) } = lambda q^2 at z = 2 lambda q
    q, lam = 0.7, 0.02
    z = np.arange(-1.0, 1.0 + 1e-5, 1e-5)
    obj = z * q - z**2 / (4 * lam)
    best = int(np.argmax(obj))
    assert abs(z[best] - 2 * lam * q) <= 1e-4
    assert abs(obj[best] - lam * q**2) <= 1e-8


def test_entropy_dual_identity_random():
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = float(rng.uniform(-2, 2))
        lam = float(rng.uniform(0.01, 0.5))
        z = np.linspace(-5, 5, 400001)
        obj = z * q - z**2 / (4 * lam)
        assert np.max(obj) == pytest.approx(lam * q**2, abs=1e-6)
