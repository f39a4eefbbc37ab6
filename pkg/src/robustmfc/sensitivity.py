"""Variational sensitivity of the backward coefficients, comparative statics,
and the quadratic robustness-loss experiment.

The directional derivative Delta_a(t) of the coefficient trajectory with
respect to a parameter direction solves the linear variational ODE along the
baseline: d/ds Delta_a = D_aF * Delta_a + D_thetaF * dTheta (s = time-to-go),
with terminal data equal to the derivative of the terminal map (nonzero only
for the G_m and G_v directions). Both Jacobians are analytic; finite
differences appear only in tests and the gradcheck harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams, stability_report, validate
from .riccati import (
    RiccatiSolution,
    _rhs,
    _rhs_jacobian,
    solve_backward,
    terminal_coeffs,
)

SENSITIVITY_FIELDS = ("beta", "eta", "chi", "sigma_L", "sigma_c", "w1", "w2_bar",
                      "kappa", "R_u", "R", "lambda_m", "lambda_v", "G_m", "G_v")


@dataclass(frozen=True)
class SensitivityDirection:
    """Weights over the differentiable parameter fields (bounds/grids excluded)."""

    weights: dict[str, float]

    def __post_init__(self) -> None:
        bad = sorted(set(self.weights) - set(SENSITIVITY_FIELDS))
        if bad:
            raise ValueError(f"non-differentiable fields in direction: {', '.join(bad)}")

    @classmethod
    def unit(cls, name: str) -> "SensitivityDirection":
        return cls({name: 1.0})

    def weight(self, name: str) -> float:
        return self.weights.get(name, 0.0)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))

    def scaled(self, c: float) -> "SensitivityDirection":
        return SensitivityDirection({k: c * w for k, w in self.weights.items()})

    def apply(self, params: ModelParams, scale: float) -> ModelParams:
        return params.replace(**{k: getattr(params, k) + scale * w
                                 for k, w in self.weights.items()})


@dataclass(frozen=True)
class SensitivityPath:
    """Directional derivative of the six coefficients on the backward grid."""

    times: np.ndarray       # aligned with the baseline RiccatiSolution grid
    delta_a: np.ndarray     # shape (len(times), 6)
    direction: SensitivityDirection


def rhs_param_jacobian(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Analytic 6x14 Jacobian of the coefficient RHS in the parameter fields.

    Columns follow SENSITIVITY_FIELDS. The RHS depends on parameters only
    through the multipliers c_m = 4*lambda_m - eta^2/R_u, c_v = 4*lambda_v
    - chi^2/R, k1 = eta*kappa/(2*R_u), k2 = kappa^2/(4*R_u), Sigma^2, and the
    direct beta/w1/w2_bar terms, so each column is a combination of fixed
    loading vectors.
    """
    _, a1, a2, a11, a12, a22 = y
    p = params
    L_cm = np.array([0.25 * a1 * a1, a1 * a11, 0.5 * a1 * a12,
                     a11 * a11, a11 * a12, 0.25 * a12 * a12])
    L_cv = np.array([0.25 * a2 * a2, 0.5 * a2 * a12, a2 * a22,
                     0.25 * a12 * a12, a12 * a22, a22 * a22])
    L_k1 = np.array([0.0, 0.0, -a1, 0.0, -2.0 * a11, -a12])
    L_s2 = np.array([a2, a12, 2.0 * a22, 0.0, 0.0, 0.0])
    e_F2 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    e_F11 = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    e_F22 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])

    cols = {
        "beta": np.array([0.0, 0.0, -2.0 * a2, 0.0, -2.0 * a12, -4.0 * a22]),
        "eta": (-2.0 * p.eta / p.R_u) * L_cm + (p.kappa / (2.0 * p.R_u)) * L_k1,
        "chi": (-2.0 * p.chi / p.R) * L_cv,
        "sigma_L": 2.0 * p.sigma_L * L_s2,
        "sigma_c": 2.0 * p.sigma_c * L_s2,
        "w1": e_F11,
        "w2_bar": e_F2,
        "kappa": (p.eta / (2.0 * p.R_u)) * L_k1
                 - (p.kappa / (2.0 * p.R_u)) * e_F22,
        "R_u": (p.eta**2 / p.R_u**2) * L_cm
               - (p.eta * p.kappa / (2.0 * p.R_u**2)) * L_k1
               + (p.kappa**2 / (4.0 * p.R_u**2)) * e_F22,
        "R": (p.chi**2 / p.R**2) * L_cv,
        "lambda_m": 4.0 * L_cm,
        "lambda_v": 4.0 * L_cv,
        "G_m": np.zeros(6),
        "G_v": np.zeros(6),
    }
    return np.column_stack([cols[name] for name in SENSITIVITY_FIELDS])


def terminal_delta(direction: SensitivityDirection) -> np.ndarray:
    """Derivative of the terminal coefficients in the given direction."""
    out = np.zeros(6)
    out[2] = direction.weight("G_v")   # a2(T) = G_v
    out[3] = direction.weight("G_m")   # a11(T) = G_m
    return out


def _direction_vector(direction: SensitivityDirection) -> np.ndarray:
    return np.array([direction.weight(name) for name in SENSITIVITY_FIELDS])


def solve_sensitivity(params: ModelParams, sol: RiccatiSolution,
                      direction: SensitivityDirection) -> SensitivityPath:
    """Integrate the variational ODE backward along the baseline trajectory.

    The baseline coefficients are re-integrated jointly with the variation
    (an augmented 12-state system) at tightened tolerances, which keeps the
    linearization exactly on the integrator's own trajectory; output is
    sampled on the grid of `sol`.
    """
    if not sol.bounded:
        raise ValueError("solve_sensitivity requires a bounded baseline solution")
    dvec = _direction_vector(direction)

    def fun(s: float, z: np.ndarray) -> np.ndarray:
        a, da = z[:6], z[6:]
        return np.concatenate([
            _rhs(a, params),
            _rhs_jacobian(a, params) @ da + rhs_param_jacobian(a, params) @ dvec,
        ])

    z_T = np.concatenate([np.asarray(terminal_coeffs(params), dtype=float),
                          terminal_delta(direction)])
    out = solve_ivp(fun, (0.0, params.T), z_T, method="Radau",
                    rtol=1e-10, atol=1e-12, dense_output=True)
    if out.status != 0:
        raise RuntimeError(f"variational integration failed: {out.message}")
    delta = out.sol(params.T - sol.times)[6:].T.copy()
    return SensitivityPath(times=sol.times, delta_a=delta, direction=direction)


def value_sensitivity(path: SensitivityPath, t: float, m: float, v: float) -> float:
    """Directional derivative of the value: Delta_a contracted with monomials."""
    times = path.times
    if not times[0] <= t <= times[-1]:
        raise ValueError(f"t = {t!r} outside [{times[0]}, {times[-1]}]")
    da = np.array([np.interp(t, times, path.delta_a[:, j]) for j in range(6)])
    mono = np.array([1.0, m, v, m * m, m * v, v * v])
    return float(da @ mono)


def fd_check(params: ModelParams, sol: RiccatiSolution,
             direction: SensitivityDirection, h: float = 1e-5) -> float:
    """Max relative gap |Delta_a - central difference| / (1 + |Delta_a|).

    The two off-baseline solves run at tightened tolerances so that solver
    error divided by 2h stays far below the comparison tolerance.
    """
    path = solve_sensitivity(params, sol, direction)
    hi = solve_backward(direction.apply(params, +h), n_nodes=len(sol.times),
                        rtol=1e-11, atol=1e-13)
    lo = solve_backward(direction.apply(params, -h), n_nodes=len(sol.times),
                        rtol=1e-11, atol=1e-13)
    if not (hi.bounded and lo.bounded):
        raise RuntimeError("finite-difference probes left the bounded region")
    fd = (hi.coeffs - lo.coeffs) / (2.0 * h)
    return float(np.max(np.abs(path.delta_a - fd) / (1.0 + np.abs(path.delta_a))))


@dataclass(frozen=True)
class LipschitzResult:
    direction: SensitivityDirection
    deltas: tuple[float, ...]
    ratios: tuple[Optional[float], ...]   # None where the perturbation is masked
    state_sample: tuple[tuple[float, float], ...]

    @property
    def max_ratio(self) -> float:
        vals = [r for r in self.ratios if r is not None]
        return max(vals) if vals else math.nan


DEFAULT_STATE_SAMPLE = tuple((m, v) for m in (-2.0, -0.5, 0.0, 0.5, 1.0, 2.0)
                             for v in (0.0, 0.5, 1.0, 2.0, 4.0))


def lipschitz_check(params: ModelParams, direction: SensitivityDirection,
                    deltas: Sequence[float],
                    state_sample: Sequence[tuple[float, float]] = DEFAULT_STATE_SAMPLE,
                    ) -> LipschitzResult:
    """Empirical Lipschitz ratios |V(Theta') - V(Theta)| / (|dTheta| (1+|x|^2)).

    Evaluated at t = 0 over the state sample; perturbations that leave the
    valid/stable region are masked, and delta = 0 reports a zero ratio.
    """
    from .policy import value
    from .riccati import RiccatiCoeffs

    base = solve_backward(params)
    if not base.bounded:
        raise ValueError("lipschitz_check requires a stable baseline")
    c0 = RiccatiCoeffs(*base.coeffs[0])
    ratios: list[Optional[float]] = []
    for d in deltas:
        if d == 0.0:
            ratios.append(0.0)
            continue
        q = direction.apply(params, d)
        if not validate(q).ok or not stability_report(q).stable:
            ratios.append(None)
            continue
        solq = solve_backward(q)
        if not solq.bounded:
            ratios.append(None)
            continue
        cq = RiccatiCoeffs(*solq.coeffs[0])
        denom_dir = abs(d) * direction.norm()
        worst = 0.0
        for m, v in state_sample:
            dV = value(cq, m, v) - value(c0, m, v)
            worst = max(worst, abs(dV) / (denom_dir * (1.0 + m * m + v * v)))
        ratios.append(worst)
    return LipschitzResult(direction=direction, deltas=tuple(float(d) for d in deltas),
                           ratios=tuple(ratios), state_sample=tuple(state_sample))


@dataclass(frozen=True)
class RobustnessLossResult:
    drift_param: str
    eps: tuple[float, ...]
    gaps: tuple[Optional[float], ...]    # None where masked
    slope: Optional[float]               # log-log fit over unmasked positive gaps
    adversary: str = "true-model feedback"

    def unmasked(self) -> list[tuple[float, float]]:
        return [(e, g) for e, g in zip(self.eps, self.gaps) if g is not None]


def _interior_closed_loop(ctrl_sol: RiccatiSolution, adv_sol: RiccatiSolution,
                          ctrl_params: ModelParams, true_params: ModelParams,
                          ) -> tuple[float, bool]:
    """Classical fourth-order integration of the interior (unfloored) loop.

    Controller uses its designed coefficients/parameters; the adversary uses
    the true model's. Returns (entropy-penalized realized cost, saturated?),
    where saturated flags any excursion of the raw selectors outside the
    admissible boxes (the experiment requires the interior regime).
    """
    p, q = ctrl_params, true_params
    n = p.n_steps
    dt = p.dt
    half_t = np.linspace(0.0, p.T, 2 * n + 1)
    CA = ctrl_sol.coeffs_dense(half_t)
    CB = adv_sol.coeffs_dense(half_t)

    eta_c, kappa, inv_2Ru = p.eta, p.kappa, 1.0 / (2.0 * p.R_u)
    chi, inv_2R = p.chi, 1.0 / (2.0 * p.R)
    two_lm, two_lv = 2.0 * q.lambda_m, 2.0 * q.lambda_v
    beta_t, eta_t, s2_t = q.beta, q.eta, q.sigma_sq
    inv4lm = 1.0 / (4.0 * q.lambda_m) if q.lambda_m > 0 else 0.0
    inv4lv = 1.0 / (4.0 * q.lambda_v) if q.lambda_v > 0 else 0.0

    saturated = False

    def deriv(k: int, m: float, v: float) -> tuple[float, float, float]:
        nonlocal saturated
        a = CA[k]
        b = CB[k]
        q_m = a[1] + 2.0 * a[3] * m + a[4] * v
        q_v = a[2] + a[4] * m + 2.0 * a[5] * v
        u = -(eta_c * q_m + kappa * v) * inv_2Ru
        pi = chi * q_v * inv_2R
        if not (p.u_min <= u <= p.u_max) or not (0.0 <= pi <= p.pi_max):
            saturated = True
        qb_m = b[1] + 2.0 * b[3] * m + b[4] * v
        qb_v = b[2] + b[4] * m + 2.0 * b[5] * v
        theta = two_lm * qb_m
        xi = two_lv * qb_v
        dm = eta_t * u + theta
        dv = -2.0 * beta_t * v + s2_t + xi - chi * pi
        dc = (q.w1 * m * m + (q.w2_bar + kappa * u) * v + q.R * pi * pi
              + q.R_u * u * u - theta * theta * inv4lm - xi * xi * inv4lv)
        return dm, dv, dc

    m, v, c = p.m0, p.v0, 0.0
    for i in range(n):
        k = 2 * i
        k1 = deriv(k, m, v)
        k2 = deriv(k + 1, m + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1])
        k3 = deriv(k + 1, m + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1])
        k4 = deriv(k + 2, m + dt * k3[0], v + dt * k3[1])
        m += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        v += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        c += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])

    return c + q.G_m * m * m + q.G_v * v, saturated


def robustness_loss_experiment(params: ModelParams, drift_param: str,
                               eps_list: Sequence[float]) -> RobustnessLossResult:
    """Performance gap of a controller designed at Theta but run at Theta'.

    For each eps: the true model shifts the drift parameter by eps; the
    controller keeps the baseline value function and parameters; the adversary
    plays the true model's linear feedback (its saddle strategy, which bounds
    the realized penalized cost below by V(Theta') for any control). The gap
    is realized penalized cost minus V(0, x0; Theta'), and the slope of
    log gap versus log eps is fitted by least squares.

    The loop is integrated in the interior regime (no variance floor, raw
    selectors required inside their boxes); eps values whose perturbed model
    is invalid/unstable or whose trajectory leaves the interior are masked.
    """
    if drift_param not in ("beta", "eta"):
        raise ValueError(f"drift_param must be 'beta' or 'eta', got {drift_param!r}")
    from .policy import value
    from .riccati import RiccatiCoeffs

    direction = SensitivityDirection.unit(drift_param)
    base_sol = solve_backward(params)
    if not base_sol.bounded:
        raise ValueError("robustness_loss_experiment requires a stable baseline")

    gaps: list[Optional[float]] = []
    for eps in eps_list:
        q = direction.apply(params, float(eps))
        if not validate(q).ok or not stability_report(q).stable:
            gaps.append(None)
            continue
        true_sol = solve_backward(q)
        if not true_sol.bounded:
            gaps.append(None)
            continue
        realized, saturated = _interior_closed_loop(base_sol, true_sol, params, q)
        if saturated:
            gaps.append(None)
            continue
        v_true = value(RiccatiCoeffs(*true_sol.coeffs_dense(0.0)), params.m0, params.v0)
        gaps.append(realized - v_true)

    pts = [(e, g) for e, g in zip(eps_list, gaps)
           if e > 0.0 and g is not None and g > 0.0]
    slope = None
    if len(pts) >= 2:
        le = np.log([e for e, _ in pts])
        lg = np.log([g for _, g in pts])
        slope = float(np.polyfit(le, lg, 1)[0])
    return RobustnessLossResult(drift_param=drift_param,
                                eps=tuple(float(e) for e in eps_list),
                                gaps=tuple(gaps), slope=slope)
