"""Model parameters, validation, and stability margins.

Every other module receives a validated, immutable ModelParams. The defaults
are the baseline calibration used across the experiment suite: a central bank
steering the cross-sectional mean and variance of bank liquidity gaps with a
policy rate and a monitoring intensity, against drift/dispersion adversaries.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector: dynamics, costs, adversary strengths, bounds, grids."""

    beta: float = 0.25       # mean-reversion rate of liquidity gaps (1/time)
    eta: float = 0.8         # pass-through of the policy rate into the mean drift
    chi: float = 0.5         # monitoring effectiveness on the variance drift
    sigma_L: float = 0.4     # idiosyncratic volatility
    sigma_c: float = 0.3     # common volatility
    w1: float = 0.1          # running weight on squared mean
    w2_bar: float = 0.5      # baseline running weight on variance
    kappa: float = 0.05      # rate-variance cost coupling: w2(u) = w2_bar + kappa*u
    R_u: float = 0.5         # quadratic cost weight on the policy rate
    R: float = 0.25          # quadratic cost weight on monitoring
    G_m: float = 0.5         # terminal weight on squared mean
    G_v: float = 0.5         # terminal weight on variance (linear)
    lambda_m: float = 0.02   # mean-adversary strength
    lambda_v: float = 0.02   # variance-adversary strength
    u_min: float = -1.0
    u_max: float = 1.0
    pi_max: float = 10.0
    T: float = 10.0          # horizon
    dt: float = 0.001        # forward Euler step
    m0: float = 0.5          # initial mean
    v0: float = 1.0          # initial variance

    def replace(self, **changes: float) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    @property
    def sigma_sq(self) -> float:
        """Effective variance forcing sigma_L**2 + sigma_c**2."""
        return self.sigma_L**2 + self.sigma_c**2

    @property
    def n_steps(self) -> int:
        """Number of forward Euler steps on [0, T]."""
        return int(round(self.T / self.dt))


PARAM_NAMES = tuple(f.name for f in fields(ModelParams))


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


@dataclass(frozen=True)
class StabilityReport:
    """Stabilizing margins of the two control channels and breakdown thresholds.

    The mean channel is stable when eta**2/R_u exceeds 4*lambda_m, the variance
    channel when chi**2/R exceeds 4*lambda_v. The star values are the adversary
    strengths at which the corresponding margin crosses zero.
    """

    margin_m: float
    margin_v: float
    lambda_m_star: float
    lambda_v_star: float
    stable: bool
    sigma_sq: float


def validate(params: ModelParams) -> ValidationReport:
    """Check every parameter invariant; violations are data, not exceptions."""
    v: list[str] = []
    pos = [("beta", params.beta), ("eta", params.eta), ("chi", params.chi),
           ("w1", params.w1), ("w2_bar", params.w2_bar), ("R_u", params.R_u),
           ("R", params.R), ("pi_max", params.pi_max)]
    for name, val in pos:
        if not val > 0:
            v.append(f"{name} must be positive (got {val!r})")
    nonneg = [("sigma_L", params.sigma_L), ("sigma_c", params.sigma_c),
              ("kappa", params.kappa), ("G_m", params.G_m), ("G_v", params.G_v),
              ("lambda_m", params.lambda_m), ("lambda_v", params.lambda_v),
              ("v0", params.v0)]
    for name, val in nonneg:
        if not val >= 0:
            v.append(f"{name} must be non-negative (got {val!r})")
    if not params.u_min < params.u_max:
        v.append(f"u_min must be below u_max (got {params.u_min!r} >= {params.u_max!r})")
    if not params.w2_bar + params.kappa * params.u_min > 0:
        v.append("variance weight not uniformly positive: "
                 f"w2_bar + kappa*u_min = {params.w2_bar + params.kappa * params.u_min!r} <= 0")
    if not params.T > 0:
        v.append(f"T must be positive (got {params.T!r})")
    if not params.dt > 0:
        v.append(f"dt must be positive (got {params.dt!r})")
    elif not params.dt < params.T:
        v.append(f"dt must be below T (got dt={params.dt!r}, T={params.T!r})")
    return ValidationReport(ok=not v, violations=tuple(v))


def stability_report(params: ModelParams) -> StabilityReport:
    """Margins eta**2/R_u - 4*lambda_m and chi**2/R - 4*lambda_v, plus thresholds."""
    gain_m = params.eta**2 / params.R_u
    gain_v = params.chi**2 / params.R
    margin_m = gain_m - 4.0 * params.lambda_m
    margin_v = gain_v - 4.0 * params.lambda_v
    return StabilityReport(
        margin_m=margin_m,
        margin_v=margin_v,
        lambda_m_star=gain_m / 4.0,
        lambda_v_star=gain_v / 4.0,
        stable=(margin_m > 0.0 and margin_v > 0.0),
        sigma_sq=params.sigma_L**2 + params.sigma_c**2,
    )


def load_config(path: str) -> ModelParams:
    """Read a flat JSON object whose keys are ModelParams field names."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"config must be a flat JSON object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(PARAM_NAMES))
    if unknown:
        raise ValueError(f"unknown config fields: {', '.join(unknown)}")
    return ModelParams(**{k: float(val) for k, val in raw.items()})


def apply_overrides(params: ModelParams, sets: list[str]) -> ModelParams:
    """Apply repeatable name=value overrides (CLI --set)."""
    changes: dict[str, float] = {}
    for item in sets:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects name=value, got {item!r}")
        name = name.strip()
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {name!r} in --set")
        changes[name] = float(value)
    return params.replace(**changes) if changes else params
