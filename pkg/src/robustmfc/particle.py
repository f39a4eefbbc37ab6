"""N-bank stochastic system with common noise, and the synchronous-coupling
convergence experiment toward the mean-field limit.

Each bank follows dL_i = [-beta (L_i - mean) + eta u + theta] dt
+ sigma_L dW_i + sigma_c dB, where the N-bank system reverts to the empirical
mean and the i.i.d. limit copies revert to the conditional mean given the
common noise. Coupling both systems through identical increments (same W_i,
same B, same initials) makes their per-bank gap the N^{-1/2} quantity of the
mean-field limit theorem.

RNG layout: one counter-based stream per bank plus one for the common noise,
all keyed by (seed, bank index), so replays are bit-identical and both coupled
systems consume the same increments by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .model import ModelParams

_COMMON_KEY = 0xFFFFFFFFFFFFFFFF  # bank-index sentinel for the common stream
_CHUNK = 2000                     # steps of increments generated per batch


def _key(seed: int, stream: int) -> np.ndarray:
    return np.array([seed & _COMMON_KEY, stream], dtype=np.uint64)


def _bank_generators(seed: int, N: int) -> tuple[list[np.random.Generator], np.random.Generator]:
    banks = [np.random.Generator(np.random.Philox(key=_key(seed, i))) for i in range(N)]
    common = np.random.Generator(np.random.Philox(key=_key(seed, _COMMON_KEY)))
    return banks, common


@dataclass(frozen=True)
class CoupledLimit:
    """Synchronously coupled i.i.d. mean-field copies and their references."""

    m_emp: np.ndarray      # empirical mean of the copies per step
    v_emp: np.ndarray      # empirical variance (divisor N-1) of the copies
    sup_gap: np.ndarray    # max over banks of |bank path - copy path| per step
    m_cond: np.ndarray     # conditional mean: deterministic mean + sigma_c * B_t
    v_cond: np.ndarray     # conditional variance: dv = (-2 beta v + sigma_L^2) dt


@dataclass(frozen=True)
class ParticleEnsemble:
    """One N-bank simulation: moment paths, final bank slice, seed provenance."""

    N: int
    seed: int
    times: np.ndarray
    m_emp: np.ndarray
    v_emp: np.ndarray          # unbiased (divisor N-1) cross-sectional variance
    L_final: np.ndarray        # bank liquidity gaps at t = T
    coupled_limit: Optional[CoupledLimit]


def simulate_nbank(params: ModelParams, N: int, seed: int,
                   u_path: np.ndarray, theta_path: np.ndarray,
                   with_coupled_limit: bool = False,
                   m_ref: Optional[np.ndarray] = None,
                   _generators=None) -> ParticleEnsemble:
    """Euler-Maruyama simulation of N coupled banks on the forward grid.

    Banks share one common increment per step and own independent
    idiosyncratic increments; initial gaps are i.i.d. Normal(m0, v0). With
    `with_coupled_limit`, N i.i.d. mean-field copies are advanced in lockstep
    from the same initials and increments, reverting to the conditional mean
    (m_ref, default the integral of eta*u + theta, plus sigma_c * B_t).

    Monitoring and the dispersion distortion act on the aggregate variance
    law only, so individual banks take just the u and theta paths.
    """
    if N < 2:
        raise ValueError(f"N must be at least 2 (empirical variance), got {N}")
    p = params
    n = p.n_steps

    def on_grid(x, name):
        x = np.asarray(x, dtype=float)
        if len(x) == n + 1:
            return x[:n]
        if len(x) != n:
            raise ValueError(f"{name} must have length {n} or {n + 1}, got {len(x)}")
        return x

    u = on_grid(u_path, "u_path")
    theta = on_grid(theta_path, "theta_path")
    drift_in = p.eta * u + theta              # common deterministic drift per step

    if m_ref is None:
        m_ref = np.empty(n + 1)
        m_ref[0] = p.m0
        m_ref[1:] = p.m0 + np.cumsum(drift_in * p.dt)
    else:
        m_ref = np.asarray(m_ref, dtype=float)
        if len(m_ref) != n + 1:
            raise ValueError(f"m_ref must have length {n + 1}, got {len(m_ref)}")

    banks, common = _bank_generators(seed, N) if _generators is None else _generators

    z0 = np.array([g.standard_normal() for g in banks])
    L = p.m0 + math.sqrt(p.v0) * z0
    sq_dt = math.sqrt(p.dt)

    m_emp = np.empty(n + 1)
    v_emp = np.empty(n + 1)
    m_emp[0] = float(np.mean(L))
    v_emp[0] = float(np.var(L, ddof=1))

    coupled = None
    if with_coupled_limit:
        Lc = L.copy()
        mc_emp = np.empty(n + 1)
        vc_emp = np.empty(n + 1)
        sup_gap = np.zeros(n + 1)
        m_cond = np.empty(n + 1)   # m_ref plus the accumulated common shock
        v_cond = np.empty(n + 1)
        mc_emp[0] = m_emp[0]
        vc_emp[0] = v_emp[0]
        m_cond[0] = m_ref[0]
        v_cond[0] = p.v0
        B = 0.0

    idio = np.empty((0, N))
    com = np.empty(0)
    base = 0
    for i in range(n):
        j = i - base
        if j >= len(com):
            base = i
            j = 0
            k = min(_CHUNK, n - i)
            idio = np.empty((k, N))
            for b in range(N):
                idio[:, b] = banks[b].standard_normal(k)
            com = common.standard_normal(k)
        dW = idio[j] * sq_dt
        dB = com[j] * sq_dt

        mean_now = m_emp[i]
        L = L + (-p.beta * (L - mean_now) + drift_in[i]) * p.dt \
            + p.sigma_L * dW + p.sigma_c * dB
        m_emp[i + 1] = float(np.mean(L))
        v_emp[i + 1] = float(np.var(L, ddof=1))

        if with_coupled_limit:
            Lc = Lc + (-p.beta * (Lc - m_cond[i]) + drift_in[i]) * p.dt \
                + p.sigma_L * dW + p.sigma_c * dB
            B += dB
            m_cond[i + 1] = m_ref[i + 1] + p.sigma_c * B
            mc_emp[i + 1] = float(np.mean(Lc))
            vc_emp[i + 1] = float(np.var(Lc, ddof=1))
            sup_gap[i + 1] = float(np.max(np.abs(L - Lc)))
            v_cond[i + 1] = v_cond[i] + (-2.0 * p.beta * v_cond[i]
                                         + p.sigma_L**2) * p.dt

    if with_coupled_limit:
        coupled = CoupledLimit(m_emp=mc_emp, v_emp=vc_emp, sup_gap=sup_gap,
                               m_cond=m_cond, v_cond=v_cond)

    times = np.linspace(0.0, p.T, n + 1)
    return ParticleEnsemble(N=N, seed=seed, times=times, m_emp=m_emp, v_emp=v_emp,
                            L_final=L, coupled_limit=coupled)

@dataclass(frozen=True)
class PocRow:
    """Error statistics of one (N, replication) coupling run (RMS over time)."""

    N: int
    replication: int
    coupling_err: float     # worst per-bank gap to the coupled copies
    mean_err: float         # |empirical mean - conditional mean|
    var_err: float          # |empirical variance - conditional variance|
    mean_err_det: float     # diagnostic: against the deterministic mean path
    var_err_det: float      # diagnostic: against the deterministic variance path


@dataclass(frozen=True)
class PocResult:
    rows: tuple[PocRow, ...]
    N_list: tuple[int, ...]
    replications: int
    seed: int
    slope: float                  # log mean coupling error vs log N
    slope_half_width: float       # 95 percent half-width of the slope estimate
    slope_mean_err: float
    slope_var_err: float
    reference_note: str = (
        "coupled copies revert to the conditional mean (deterministic mean plus "
        "the integrated common shock); *_det columns compare against the "
        "deterministic closed-loop moments, which differ by the common-noise "
        "wander and the aggregate-level monitoring/distortion terms")


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _fit_slope(N_list: Sequence[int], errs: np.ndarray) -> tuple[float, float]:
    """OLS slope of log(mean error) on log(N) with a 95 percent half-width."""
    if np.any(errs <= 0.0):          # degenerate (noise-free) runs have no slope
        return float("nan"), float("nan")
    x = np.log(np.asarray(N_list, dtype=float))
    y = np.log(errs)
    n = len(x)
    slope, intercept = np.polyfit(x, y, 1)
    if n <= 2:
        return float(slope), float("nan")
    resid = y - (slope * x + intercept)
    s2 = float(np.sum(resid**2)) / (n - 2)
    se = math.sqrt(s2 / float(np.sum((x - np.mean(x))**2)))
    return float(slope), float(se * stats.t.ppf(0.975, n - 2))


def poc_experiment(params: ModelParams, N_list: Sequence[int], replications: int,
                   seed: int) -> PocResult:
    """Synchronous-coupling convergence measurement across system sizes.

    The closed-loop deterministic solution supplies the control and distortion
    paths and the reference moments. For each (N, replication) the N-bank
    system and its coupled copies run from one derived seed; errors are RMS
    over the horizon. The headline slope is fitted on the per-bank coupling
    error, the quantity the mean-field limit bounds by C_T * N^(-1/2).
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    Ns = list(N_list)
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("N_list must be strictly increasing")

    from .forward import simulate
    from .riccati import solve_backward

    sol = solve_backward(params)
    traj = simulate(params, sol)

    rows: list[PocRow] = []
    for N in Ns:
        for r in range(replications):
            sim_seed = int(np.random.SeedSequence(entropy=(seed, N, r))
                           .generate_state(1, dtype=np.uint64)[0])
            ens = simulate_nbank(params, N, sim_seed, traj.u, traj.theta,
                                 with_coupled_limit=True, m_ref=traj.m)
            cl = ens.coupled_limit
            rows.append(PocRow(
                N=N, replication=r,
                coupling_err=_rms(cl.sup_gap),
                mean_err=_rms(ens.m_emp - cl.m_cond),
                var_err=_rms(ens.v_emp - cl.v_cond),
                mean_err_det=_rms(ens.m_emp - traj.m),
                var_err_det=_rms(ens.v_emp - traj.v),
            ))

    def mean_by_N(field: str) -> np.ndarray:
        return np.array([np.mean([getattr(r, field) for r in rows if r.N == N])
                         for N in Ns])

    slope, hw = _fit_slope(Ns, mean_by_N("coupling_err"))
    slope_m, _ = _fit_slope(Ns, mean_by_N("mean_err"))
    slope_v, _ = _fit_slope(Ns, mean_by_N("var_err"))
    return PocResult(rows=tuple(rows), N_list=tuple(int(N) for N in Ns),
                     replications=replications, seed=seed, slope=slope,
                     slope_half_width=hw, slope_mean_err=slope_m,
                     slope_var_err=slope_v)


def write_poc_csv(result: PocResult, path: str) -> None:
    from ._io import write_csv

    header = ["N", "replication", "coupling_err", "mean_err", "var_err",
              "mean_err_det", "var_err_det"]
    rows = [[str(r.N), str(r.replication), r.coupling_err, r.mean_err, r.var_err,
             r.mean_err_det, r.var_err_det] for r in result.rows]
    write_csv(path, header, rows)


def write_poc_summary(result: PocResult, path: str) -> None:
    from ._io import write_json

    def clean(x: float):
        return None if math.isnan(x) else x

    write_json(path, {
        "N_list": list(result.N_list),
        "replications": result.replications,
        "seed": result.seed,
        "slope": clean(result.slope),
        "slope_half_width": clean(result.slope_half_width),
        "slope_mean_err": clean(result.slope_mean_err),
        "slope_var_err": clean(result.slope_var_err),
        "reference_note": result.reference_note,
    })
