"""Closed-loop moment propagation with explicit Euler, cost accumulation, metrics.

One step: evaluate the value gradient at (t_n, m_n, v_n), form worst-case
distortions and projected controls, then

    m_{n+1} = m_n + (eta*u_n + theta_n) * dt
    v_{n+1} = max(0, v_n + (-2*beta*v_n + Sigma^2 + xi_n - chi*pi_n) * dt)

Controls computed at t_n apply over [t_n, t_{n+1}), so the running cost uses
left-endpoint rectangles, consistent with the update order. Reported J
excludes the adversary's entropy penalty; J_pen additionally subtracts it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._io import fmt, write_json
from .model import ModelParams
from .riccati import RiccatiSolution


@dataclass(frozen=True)
class Metrics:
    """Scalar summary of one closed-loop (or open-loop) trajectory."""

    J: float           # running + terminal cost, adversary penalty excluded
    J_pen: float       # J minus the entropy penalty terms
    m_T: float
    v_T: float
    u_bar: float       # time-averaged policy rate (signed)
    pi_bar: float      # time-averaged monitoring intensity
    theta_peak: float  # max |theta| over the realized path
    xi_peak: float     # max |xi| over the realized path
    S_u: float         # fraction of steps with the rate pinned at a bound
    S_pi: float        # fraction of steps with monitoring pinned at a bound

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in
                ("J", "J_pen", "m_T", "v_T", "u_bar", "pi_bar",
                 "theta_peak", "xi_peak", "S_u", "S_pi")}


METRIC_FIELDS = ("J", "J_pen", "m_T", "v_T", "u_bar", "pi_bar",
                 "theta_peak", "xi_peak", "S_u", "S_pi")


@dataclass(frozen=True)
class Trajectory:
    """Realized paths on the uniform forward grid (arrays all length N+1)."""

    times: np.ndarray
    m: np.ndarray
    v: np.ndarray
    u: np.ndarray
    pi: np.ndarray
    theta: np.ndarray
    xi: np.ndarray
    metrics: Metrics


def cost(trajectory: "Trajectory", params: ModelParams) -> tuple[float, float]:
    """Left-rectangle quadrature of the running cost plus terminal cost.

    Returns (J, J_pen); J_pen subtracts theta^2/(4*lambda_m) + xi^2/(4*lambda_v)
    (a channel with zero adversary strength contributes nothing).
    """
    t = trajectory
    return _cost(t.m, t.v, t.u, t.pi, t.theta, t.xi, params)


def _cost(m, v, u, pi, theta, xi, params: ModelParams) -> tuple[float, float]:
    p = params
    n = len(m) - 1
    run = (p.w1 * m[:n]**2 + (p.w2_bar + p.kappa * u[:n]) * v[:n]
           + p.R * pi[:n]**2 + p.R_u * u[:n]**2)
    J = float(np.sum(run) * p.dt + p.G_m * m[n]**2 + p.G_v * v[n])
    pen = 0.0
    if p.lambda_m > 0.0:
        pen += float(np.sum(theta[:n]**2) * p.dt / (4.0 * p.lambda_m))
    if p.lambda_v > 0.0:
        pen += float(np.sum(xi[:n]**2) * p.dt / (4.0 * p.lambda_v))
    return J, J - pen


def _metrics(m, v, u, pi, theta, xi, sat_u: float, sat_pi: float,
             params: ModelParams) -> Metrics:
    n = len(m) - 1
    J, J_pen = _cost(m, v, u, pi, theta, xi, params)
    return Metrics(
        J=J, J_pen=J_pen, m_T=float(m[n]), v_T=float(v[n]),
        u_bar=float(np.mean(u[:n])), pi_bar=float(np.mean(pi[:n])),
        theta_peak=float(np.max(np.abs(theta))), xi_peak=float(np.max(np.abs(xi))),
        S_u=sat_u, S_pi=sat_pi,
    )


def simulate(params: ModelParams, sol: RiccatiSolution) -> Trajectory:
    """Propagate the feedback loop over [0, T] using the stored coefficients."""
    if not sol.bounded:
        raise ValueError("simulate requires a bounded Riccati solution")
    p = params
    n = p.n_steps
    t_grid = np.linspace(0.0, p.T, n + 1)

    if len(sol.times) == n + 1 and abs(sol.times[-1] - p.T) < 1e-12 \
            and abs(sol.times[0]) < 1e-12:
        C = sol.coeffs
    else:  # denser or misaligned backward grid: interpolate per column
        C = np.column_stack([np.interp(t_grid, sol.times, sol.coeffs[:, j])
                             for j in range(6)])

    A1 = C[:, 1].tolist()
    A2 = C[:, 2].tolist()
    A11 = C[:, 3].tolist()
    A12 = C[:, 4].tolist()
    A22 = C[:, 5].tolist()

    m_arr = np.empty(n + 1)
    v_arr = np.empty(n + 1)
    u_arr = np.empty(n + 1)
    pi_arr = np.empty(n + 1)
    th_arr = np.empty(n + 1)
    xi_arr = np.empty(n + 1)

    dt = p.dt
    eta, beta, chi, kappa = p.eta, p.beta, p.chi, p.kappa
    two_lm, two_lv = 2.0 * p.lambda_m, 2.0 * p.lambda_v
    inv_2Ru, inv_2R = 1.0 / (2.0 * p.R_u), 1.0 / (2.0 * p.R)
    u_lo, u_hi, pi_hi = p.u_min, p.u_max, p.pi_max
    s2 = p.sigma_sq

    m, v = p.m0, p.v0
    sat_u = 0
    sat_pi = 0
    for i in range(n + 1):
        q_m = A1[i] + 2.0 * A11[i] * m + A12[i] * v
        q_v = A2[i] + A12[i] * m + 2.0 * A22[i] * v
        theta = two_lm * q_m
        xi = two_lv * q_v
        u_fb = -(eta * q_m + kappa * v) * inv_2Ru
        pi_fb = chi * q_v * inv_2R
        u = u_lo if u_fb < u_lo else (u_hi if u_fb > u_hi else u_fb)
        pi = 0.0 if pi_fb < 0.0 else (pi_hi if pi_fb > pi_hi else pi_fb)
        m_arr[i] = m
        v_arr[i] = v
        u_arr[i] = u
        pi_arr[i] = pi
        th_arr[i] = theta
        xi_arr[i] = xi
        if i < n:
            if u != u_fb:
                sat_u += 1
            if pi != pi_fb:
                sat_pi += 1
            m = m + (eta * u + theta) * dt
            v_next = v + (-2.0 * beta * v + s2 + xi - chi * pi) * dt
            v = v_next if v_next > 0.0 else 0.0

    metrics = _metrics(m_arr, v_arr, u_arr, pi_arr, th_arr, xi_arr,
                       sat_u / n, sat_pi / n, p)
    return Trajectory(times=t_grid, m=m_arr, v=v_arr, u=u_arr, pi=pi_arr,
                      theta=th_arr, xi=xi_arr, metrics=metrics)


def simulate_open_loop(params: ModelParams, u_path: np.ndarray, pi_path: np.ndarray,
                       theta_path: np.ndarray, xi_path: np.ndarray) -> Trajectory:
    """Same Euler updates with supplied inputs instead of feedback.

    Paths live on the forward grid: length N+1 (last sample recorded but not
    applied) or length N. Out-of-bounds controls are a contract violation.
    """
    p = params
    n = p.n_steps

    def on_grid(x, name):
        x = np.asarray(x, dtype=float)
        if len(x) == n:
            x = np.append(x, x[-1])
        if len(x) != n + 1:
            raise ValueError(f"{name} must have length {n} or {n + 1}, got {len(x)}")
        return x

    u = on_grid(u_path, "u_path")
    pi = on_grid(pi_path, "pi_path")
    theta = on_grid(theta_path, "theta_path")
    xi = on_grid(xi_path, "xi_path")
    if np.any(u < p.u_min) or np.any(u > p.u_max):
        raise ValueError("u_path leaves [u_min, u_max]")
    if np.any(pi < 0.0) or np.any(pi > p.pi_max):
        raise ValueError("pi_path leaves [0, pi_max]")

    t_grid = np.linspace(0.0, p.T, n + 1)
    m_arr = np.empty(n + 1)
    v_arr = np.empty(n + 1)
    m, v = p.m0, p.v0
    s2 = p.sigma_sq
    for i in range(n + 1):
        m_arr[i] = m
        v_arr[i] = v
        if i < n:
            m = m + (p.eta * u[i] + theta[i]) * p.dt
            v_next = v + (-2.0 * p.beta * v + s2 + xi[i] - p.chi * pi[i]) * p.dt
            v = v_next if v_next > 0.0 else 0.0

    # Supplied controls are admissible by contract, so nothing is saturated.
    metrics = _metrics(m_arr, v_arr, u, pi, theta, xi, 0.0, 0.0, p)
    return Trajectory(times=t_grid, m=m_arr, v=v_arr, u=u, pi=pi,
                      theta=theta, xi=xi, metrics=metrics)


def dump_csv(traj: Trajectory, path: str) -> None:
    """Write t,m,v,u,pi,theta,xi rows (17 significant digits)."""
    cols = (traj.times, traj.m, traj.v, traj.u, traj.pi, traj.theta, traj.xi)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,m,v,u,pi,theta,xi\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(x) for x in row) + "\n")


def dump_metrics_json(metrics: Metrics, path: str) -> None:
    write_json(path, metrics.as_dict())
