"""Robust linear-quadratic mean-field control of bank liquidity.

Backward Riccati synthesis of the robust value function, closed-loop forward
simulation with projected controls and worst-case distortions, the experiment
harnesses behind the adversary/sensitivity/loss-of-control analyses, a
variational sensitivity solver, and an N-bank particle simulator validating
the mean-field limit.
"""

__version__ = "0.1.0"

from .model import ModelParams, StabilityReport, ValidationReport, stability_report, validate
from .riccati import (
    RiccatiCoeffs,
    RiccatiSolution,
    coeffs_at,
    riccati_rhs,
    scalar_comparison_horizon,
    solve_backward,
)
from .policy import ControlPair, DistortionPair, ValueGradient, feedback, gradient, value, worst_case
from .forward import Metrics, Trajectory, cost, simulate, simulate_open_loop

__all__ = [
    "ModelParams", "StabilityReport", "ValidationReport", "validate", "stability_report",
    "RiccatiCoeffs", "RiccatiSolution", "riccati_rhs", "solve_backward", "coeffs_at",
    "scalar_comparison_horizon",
    "ValueGradient", "ControlPair", "DistortionPair", "value", "gradient", "feedback",
    "worst_case",
    "Metrics", "Trajectory", "simulate", "simulate_open_loop", "cost",
    "__version__",
]
