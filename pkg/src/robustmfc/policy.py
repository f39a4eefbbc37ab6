"""Value evaluation, analytic gradients, projected feedback, worst-case distortions.

All pure functions of the current coefficients and state. Gradients are
analytic everywhere in the production path; finite differences appear only in
tests. Values landing exactly on a control bound count as not saturated, which
keeps saturation statistics conservative.
"""

from __future__ import annotations

from typing import NamedTuple

from .model import ModelParams
from .riccati import RiccatiCoeffs


class ValueGradient(NamedTuple):
    q_m: float   # dV/dm
    q_v: float   # dV/dv


class ControlPair(NamedTuple):
    u: float
    pi: float
    u_saturated: bool
    pi_saturated: bool


class DistortionPair(NamedTuple):
    theta: float  # mean drift distortion
    xi: float     # variance drift distortion


def value(coeffs: RiccatiCoeffs, m: float, v: float) -> float:
    """Quadratic form a0 + a1*m + a2*v + a11*m^2 + a12*m*v + a22*v^2."""
    a0, a1, a2, a11, a12, a22 = coeffs
    return a0 + a1 * m + a2 * v + a11 * m * m + a12 * m * v + a22 * v * v


def gradient(coeffs: RiccatiCoeffs, m: float, v: float) -> ValueGradient:
    a0, a1, a2, a11, a12, a22 = coeffs
    return ValueGradient(q_m=a1 + 2.0 * a11 * m + a12 * v,
                         q_v=a2 + a12 * m + 2.0 * a22 * v)


def feedback(grad: ValueGradient, v: float, params: ModelParams) -> ControlPair:
    """Interior minimizers projected onto the admissible intervals.

    u_fb = -(eta*q_m + kappa*v) / (2*R_u), pi_fb = chi*q_v / (2*R).
    """
    u_fb = -(params.eta * grad.q_m + params.kappa * v) / (2.0 * params.R_u)
    pi_fb = params.chi * grad.q_v / (2.0 * params.R)
    u = min(max(u_fb, params.u_min), params.u_max)
    pi = min(max(pi_fb, 0.0), params.pi_max)
    return ControlPair(u=u, pi=pi,
                       u_saturated=(u_fb < params.u_min or u_fb > params.u_max),
                       pi_saturated=(pi_fb < 0.0 or pi_fb > params.pi_max))


def worst_case(grad: ValueGradient, params: ModelParams) -> DistortionPair:
    """Entropy-penalized adversary's maximizers: linear in the value gradients."""
    return DistortionPair(theta=2.0 * params.lambda_m * grad.q_m,
                          xi=2.0 * params.lambda_v * grad.q_v)
