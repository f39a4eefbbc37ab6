"""Backward integration of the six coupled value-coefficient ODEs.

The quadratic value ansatz V(t,m,v) = a0 + a1*m + a2*v + a11*m**2 + a12*m*v
+ a22*v**2 has coefficients governed by six coupled Riccati-type ODEs, solved
from the terminal data a2(T) = G_v, a11(T) = G_m (all others zero) down to
t = 0. The right-hand sides below are derivatives with respect to time-to-go
s = T - t; integrating them forward in s from the terminal data is the
backward sweep. An adaptive L-stable implicit Runge-Kutta scheme of Radau IIA
type with the analytic Jacobian handles stiffness near the breakdown boundary,
and a guard converts finite-time explosion into a BlowUp status instead of a
solver fault.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams

BLOWUP_GUARD = 1e8
RTOL = 1e-8
ATOL = 1e-10

STATUS_BOUNDED = "bounded"
STATUS_BLOWUP = "blowup"


class RiccatiCoeffs(NamedTuple):
    """Value-function coefficients at one time, ordered (1, m, v, m^2, m*v, v^2)."""

    a0: float
    a1: float
    a2: float
    a11: float
    a12: float
    a22: float


def terminal_coeffs(params: ModelParams) -> RiccatiCoeffs:
    """Coefficients matching the terminal cost G_m*m**2 + G_v*v."""
    return RiccatiCoeffs(0.0, 0.0, params.G_v, params.G_m, 0.0, 0.0)


def _constants(p: ModelParams) -> tuple[float, float, float, float, float]:
    """Shared multipliers: net quadratic gains, rate-variance coupling, noise."""
    c_m = 4.0 * p.lambda_m - p.eta**2 / p.R_u
    c_v = 4.0 * p.lambda_v - p.chi**2 / p.R
    k1 = p.eta * p.kappa / (2.0 * p.R_u)
    k2 = p.kappa**2 / (4.0 * p.R_u)
    return c_m, c_v, k1, k2, p.sigma_sq


def _rhs(y: np.ndarray, p: ModelParams) -> np.ndarray:
    """RHS of the coefficient system in time-to-go, y = (a0,a1,a2,a11,a12,a22)."""
    a0, a1, a2, a11, a12, a22 = y
    c_m, c_v, k1, k2, s2 = _constants(p)
    return np.array([
        s2 * a2 + 0.25 * c_m * a1**2 + 0.25 * c_v * a2**2,
        s2 * a12 + c_m * a1 * a11 + 0.5 * c_v * a2 * a12,
        p.w2_bar - 2.0 * p.beta * a2 + 2.0 * s2 * a22
        + 0.5 * c_m * a1 * a12 + c_v * a2 * a22 - k1 * a1,
        p.w1 + c_m * a11**2 + 0.25 * c_v * a12**2,
        -2.0 * p.beta * a12 - 2.0 * k1 * a11 + c_m * a11 * a12 + c_v * a12 * a22,
        -4.0 * p.beta * a22 - k2 - k1 * a12 + 0.25 * c_m * a12**2 + c_v * a22**2,
    ])


def _rhs_jacobian(y: np.ndarray, p: ModelParams) -> np.ndarray:
    """Analytic 6x6 Jacobian of _rhs with respect to the coefficients."""
    _, a1, a2, a11, a12, a22 = y
    c_m, c_v, k1, _, s2 = _constants(p)
    b2 = 2.0 * p.beta
    return np.array([
        [0.0, 0.5 * c_m * a1, s2 + 0.5 * c_v * a2, 0.0, 0.0, 0.0],
        [0.0, c_m * a11, 0.5 * c_v * a12, c_m * a1, s2 + 0.5 * c_v * a2, 0.0],
        [0.0, 0.5 * c_m * a12 - k1, -b2 + c_v * a22, 0.0, 0.5 * c_m * a1,
         2.0 * s2 + c_v * a2],
        [0.0, 0.0, 0.0, 2.0 * c_m * a11, 0.5 * c_v * a12, 0.0],
        [0.0, 0.0, 0.0, -2.0 * k1 + c_m * a12,
         -b2 + c_m * a11 + c_v * a22, c_v * a12],
        [0.0, 0.0, 0.0, 0.0, -k1 + 0.5 * c_m * a12, -2.0 * b2 + 2.0 * c_v * a22],
    ])


def riccati_rhs(a: RiccatiCoeffs, params: ModelParams) -> RiccatiCoeffs:
    """Time-to-go derivatives of the six coefficients at state `a`."""
    return RiccatiCoeffs(*_rhs(np.asarray(a, dtype=float), params))


def riccati_rhs_jacobian(a: RiccatiCoeffs, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of riccati_rhs; also drives the implicit stage solves."""
    return _rhs_jacobian(np.asarray(a, dtype=float), params)


@dataclass(frozen=True)
class RiccatiSolution:
    """Coefficient trajectories on an increasing grid over [0, T].

    For a blow-up the grid is truncated: nodes below t_star (the time at which
    the guard tripped, going backward from T) carry no values.
    """

    times: np.ndarray            # increasing, subset of the requested grid
    coeffs: np.ndarray           # shape (len(times), 6), rows ordered like times
    status: str                  # STATUS_BOUNDED | STATUS_BLOWUP
    t_star: Optional[float]      # earliest valid time for a blow-up, else None
    params: ModelParams
    _dense: object = None        # scipy dense-output callable in time-to-go

    @property
    def bounded(self) -> bool:
        return self.status == STATUS_BOUNDED

    def coeffs_dense(self, t: np.ndarray | float) -> np.ndarray:
        """Evaluate the integrator's collocation polynomial at time(s) t.

        Returns shape (6,) for scalar t and (len(t), 6) for arrays.
        """
        s = self.params.T - np.asarray(t, dtype=float)
        out = np.asarray(self._dense(s), dtype=float)
        return out.T if out.ndim == 2 else out


def solve_backward(params: ModelParams, n_nodes: Optional[int] = None,
                   rtol: float = RTOL, atol: float = ATOL) -> RiccatiSolution:
    """Integrate the coefficient system from t = T down to t = 0.

    Dense output is sampled on a uniform grid of `n_nodes` points aligned with
    the forward grid (default T/dt + 1). Integration itself is adaptive with
    rtol 1e-8 / atol 1e-10 (finite-difference oracles tighten these); blow-up
    is detected when any coefficient magnitude crosses the guard or the step
    controller gives up, and is reported as a status rather than raised.
    """
    if n_nodes is None:
        n_nodes = int(round(params.T / params.dt)) + 1
    if n_nodes < 2:
        raise ValueError(f"n_nodes must be at least 2, got {n_nodes}")

    y_T = np.asarray(terminal_coeffs(params), dtype=float)

    def fun(s: float, y: np.ndarray) -> np.ndarray:
        return _rhs(y, params)

    def jac(s: float, y: np.ndarray) -> np.ndarray:
        return _rhs_jacobian(y, params)

    def guard(s: float, y: np.ndarray) -> float:
        return float(np.max(np.abs(y))) - BLOWUP_GUARD

    guard.terminal = True
    guard.direction = 1

    sol = solve_ivp(fun, (0.0, params.T), y_T, method="Radau", jac=jac,
                    rtol=rtol, atol=atol, dense_output=True, events=guard)

    if sol.status == 1 and sol.t_events[0].size:      # guard tripped
        s_stop = float(sol.t_events[0][0])
    elif sol.status == -1:                            # step-size underflow near explosion
        s_stop = float(sol.t[-1])
    elif sol.status == 0:
        s_stop = None
    else:  # pragma: no cover - no other scipy statuses exist
        raise RuntimeError(f"unexpected integrator status {sol.status}: {sol.message}")

    t_grid = np.linspace(0.0, params.T, n_nodes)
    if s_stop is None:
        s_grid = params.T - t_grid
        coeffs = sol.sol(s_grid).T.copy()
        return RiccatiSolution(times=t_grid, coeffs=coeffs, status=STATUS_BOUNDED,
                               t_star=None, params=params, _dense=sol.sol)

    # Healthy-state solver faults (not near the guard) are genuine errors.
    y_last = sol.sol(s_stop) if sol.status == -1 else sol.y_events[0][0]
    if sol.status == -1 and float(np.max(np.abs(y_last))) < 1e-2 * BLOWUP_GUARD:
        raise RuntimeError(
            f"implicit stage solver failed at t = {params.T - s_stop:.6g} with "
            f"coefficient magnitude {float(np.max(np.abs(y_last))):.3g}: {sol.message}")

    t_star = params.T - s_stop
    keep = t_grid >= t_star
    t_kept = t_grid[keep]
    coeffs = sol.sol(params.T - t_kept).T.copy()
    return RiccatiSolution(times=t_kept, coeffs=coeffs, status=STATUS_BLOWUP,
                           t_star=t_star, params=params, _dense=sol.sol)


def coeffs_at(sol: RiccatiSolution, t: float) -> RiccatiCoeffs:
    """Linear interpolation between the bracketing grid nodes; exact at nodes."""
    if not sol.bounded:
        raise ValueError("coeffs_at requires a bounded solution")
    T = sol.params.T
    if not 0.0 <= t <= T:
        raise ValueError(f"t = {t!r} outside [0, {T}]")
    times = sol.times
    i = int(np.searchsorted(times, t, side="right")) - 1
    if i < 0:
        i = 0
    if i >= len(times) - 1:
        return RiccatiCoeffs(*sol.coeffs[-1])
    t0, t1 = times[i], times[i + 1]
    if t == t0:
        return RiccatiCoeffs(*sol.coeffs[i])
    w = (t - t0) / (t1 - t0)
    return RiccatiCoeffs(*((1.0 - w) * sol.coeffs[i] + w * sol.coeffs[i + 1]))


def scalar_comparison_horizon(params: ModelParams) -> Optional[float]:
    """Backward distance at which the scalar comparison ODE for a11 explodes.

    The a11 equation dominates the scalar ODE y' = w1 + C*y**2 with
    C = 4*lambda_m - eta**2/R_u and y(0) = G_m in time-to-go. For C <= 0 there
    is no explosion (None). Otherwise the tangent-form solution gives the
    closed-form distance; for w1 = 0 the separable solution gives 1/(C*G_m).
    """
    C = 4.0 * params.lambda_m - params.eta**2 / params.R_u
    if C <= 0.0:
        return None
    if params.w1 > 0.0:
        r = math.sqrt(C / params.w1)
        return (math.pi / 2.0 - math.atan(params.G_m * r)) / math.sqrt(params.w1 * C)
    if params.G_m > 0.0:
        return 1.0 / (C * params.G_m)
    return None


def dump_csv(sol: RiccatiSolution, path: str) -> None:
    """Write t,a0,a1,a2,a11,a12,a22,status rows (17 significant digits)."""
    from ._io import fmt

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,a0,a1,a2,a11,a12,a22,status\n")
        for t, row in zip(sol.times, sol.coeffs):
            vals = ",".join(fmt(x) for x in row)
            fh.write(f"{fmt(t)},{vals},{sol.status}\n")
