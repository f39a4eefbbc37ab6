"""Sweep harnesses: adversary strength, robustness-efficiency grids, parameter
sensitivity/saturation, and the loss-of-control map.

Every cell is an independent backward+forward solve from a fresh parameter set.
A cell is masked as breakdown when the stability margins are non-positive or
the Riccati solve itself reports blow-up; masked cells carry no metrics and
serialize as the "breakdown" sentinel. Cells are mapped over an optional
process pool and always gathered by cell index, so results and CSV bytes do
not depend on scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._io import BREAKDOWN_SENTINEL, provenance, write_csv, write_json
from .forward import METRIC_FIELDS, Metrics, simulate
from .model import ModelParams, stability_report, validate
from .riccati import solve_backward


@dataclass(frozen=True)
class SweepResult:
    """Rectangular grid of per-cell metrics with a breakdown mask.

    One axis: shape (n,); two axes: shape (n0, n1) with axes[0] varying along
    rows. cells is a flat tuple in row-major order; None where masked.
    """

    axis_names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    cells: tuple[Optional[Metrics], ...]
    breakdown_mask: np.ndarray          # bool, same row-major shape, True = masked
    base_params: ModelParams

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    def cell(self, *idx: int) -> Optional[Metrics]:
        flat = idx[0] if len(idx) == 1 else idx[0] * self.shape[1] + idx[1]
        return self.cells[flat]

    def metric_grid(self, name: str) -> np.ndarray:
        """Dense array of one metric with NaN at masked cells."""
        out = np.full(len(self.cells), np.nan)
        for i, c in enumerate(self.cells):
            if c is not None:
                out[i] = getattr(c, name)
        return out.reshape(self.shape)


def _run_cell(args: tuple[ModelParams, dict[str, float]]) -> Optional[Metrics]:
    """One sweep cell: validate, stability-mask, solve, simulate."""
    base, changes = args
    params = base.replace(**changes)
    if not validate(params).ok or not stability_report(params).stable:
        return None
    sol = solve_backward(params)
    if not sol.bounded:
        return None
    return simulate(params, sol).metrics


def _map_cells(base: ModelParams, change_list: Sequence[dict[str, float]],
               workers: int) -> list[Optional[Metrics]]:
    tasks = [(base, ch) for ch in change_list]
    if workers <= 1 or len(tasks) < 4:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(tasks) // (8 * workers))
        return list(pool.map(_run_cell, tasks, chunksize=chunk))


def _pack_1d(name: str, grid: np.ndarray, cells: list[Optional[Metrics]],
             base: ModelParams) -> SweepResult:
    mask = np.array([c is None for c in cells])
    return SweepResult(axis_names=(name,), axes=(np.asarray(grid, dtype=float),),
                       cells=tuple(cells), breakdown_mask=mask, base_params=base)


def adversary_sweep(base: ModelParams, lambdas: np.ndarray,
                    workers: int = 1) -> SweepResult:
    """Symmetric sweep lambda_m = lambda_v = lambda over a 1-D grid."""
    grid = np.asarray(lambdas, dtype=float)
    cells = _map_cells(base, [{"lambda_m": float(l), "lambda_v": float(l)}
                              for l in grid], workers)
    return _pack_1d("lambda", grid, cells, base)


ASYMMETRIC_CASES = ((0.001, 0.1), (0.001, 0.2), (0.1, 0.001), (0.2, 0.001))


def asymmetric_cases(base: ModelParams, workers: int = 1,
                     cases: Sequence[tuple[float, float]] = ASYMMETRIC_CASES,
                     ) -> list[tuple[tuple[float, float], Optional[Metrics]]]:
    """The four asymmetric (lambda_m, lambda_v) test points."""
    cells = _map_cells(base, [{"lambda_m": lm, "lambda_v": lv}
                              for lm, lv in cases], workers)
    return list(zip([tuple(c) for c in cases], cells))


@dataclass(frozen=True)
class TradeoffResult:
    """2-D adversary grid plus the two cross-sections at a fixed strength."""

    grid: SweepResult
    xsec_lambda_m: SweepResult   # lambda_v pinned near xsec_at, lambda_m varies
    xsec_lambda_v: SweepResult   # lambda_m pinned near xsec_at, lambda_v varies
    xsec_at: float


def tradeoff_grid(base: ModelParams, lm_grid: np.ndarray, lv_grid: np.ndarray,
                  workers: int = 1, xsec_at: float = 0.02) -> TradeoffResult:
    """Full (lambda_m, lambda_v) grid of metrics; cross-sections are taken
    cell-for-cell from the computed grid at the axis value nearest xsec_at."""
    lm = np.asarray(lm_grid, dtype=float)
    lv = np.asarray(lv_grid, dtype=float)
    changes = [{"lambda_m": float(a), "lambda_v": float(b)} for a in lm for b in lv]
    cells = _map_cells(base, changes, workers)
    mask = np.array([c is None for c in cells]).reshape(len(lm), len(lv))
    grid = SweepResult(axis_names=("lambda_m", "lambda_v"), axes=(lm, lv),
                       cells=tuple(cells), breakdown_mask=mask, base_params=base)

    j_v = int(np.argmin(np.abs(lv - xsec_at)))
    j_m = int(np.argmin(np.abs(lm - xsec_at)))
    row = [grid.cell(i, j_v) for i in range(len(lm))]   # vary lambda_m
    col = [grid.cell(j_m, j) for j in range(len(lv))]   # vary lambda_v
    return TradeoffResult(
        grid=grid,
        xsec_lambda_m=_pack_1d("lambda_m", lm, row,
                               base.replace(lambda_v=float(lv[j_v]))),
        xsec_lambda_v=_pack_1d("lambda_v", lv, col,
                               base.replace(lambda_m=float(lm[j_m]))),
        xsec_at=xsec_at,
    )


SWEEPABLE = ("eta", "chi", "beta", "kappa", "R_u", "R")


def default_grid(base: ModelParams, name: str, n: int = 25) -> np.ndarray:
    """Plus/minus 60 percent around the base value (recorded in provenance)."""
    x = getattr(base, name)
    return np.linspace(0.4 * x, 1.6 * x, n)


def parameter_sensitivity(base: ModelParams, param_name: str,
                          grid: np.ndarray, workers: int = 1) -> SweepResult:
    """1-D sweep of one model primitive; produces cost and saturation profiles."""
    if param_name not in SWEEPABLE:
        raise ValueError(f"param_name must be one of {SWEEPABLE}, got {param_name!r}")
    g = np.asarray(grid, dtype=float)
    cells = _map_cells(base, [{param_name: float(x)} for x in g], workers)
    return _pack_1d(param_name, g, cells, base)


def loss_map(base: ModelParams, chi_grid: np.ndarray, beta_grid: np.ndarray,
             workers: int = 1) -> SweepResult:
    """2-D (chi, beta) map; the saturation layer is S_u + S_pi per unmasked cell."""
    cg = np.asarray(chi_grid, dtype=float)
    bg = np.asarray(beta_grid, dtype=float)
    changes = [{"chi": float(c), "beta": float(b)} for c in cg for b in bg]
    cells = _map_cells(base, changes, workers)
    mask = np.array([c is None for c in cells]).reshape(len(cg), len(bg))
    return SweepResult(axis_names=("chi", "beta"), axes=(cg, bg),
                       cells=tuple(cells), breakdown_mask=mask, base_params=base)


def saturation_layer(result: SweepResult) -> np.ndarray:
    """Total time at bounds S_u + S_pi (NaN where masked)."""
    return result.metric_grid("S_u") + result.metric_grid("S_pi")


def write_sweep_csv(result: SweepResult, path: str) -> None:
    """Long format: one row per cell with axis values, metrics, mask flag.

    Masked cells carry the "breakdown" sentinel in every metric column.
    """
    header = list(result.axis_names) + list(METRIC_FIELDS) + ["breakdown"]
    rows = []
    if len(result.axes) == 1:
        coords = [(i,) for i in range(len(result.axes[0]))]
    else:
        coords = [(i, j) for i in range(len(result.axes[0]))
                  for j in range(len(result.axes[1]))]
    for idx in coords:
        cell = result.cell(*idx)
        axis_vals = [result.axes[k][i] for k, i in enumerate(idx)]
        if cell is None:
            rows.append(axis_vals + [BREAKDOWN_SENTINEL] * len(METRIC_FIELDS) + ["true"])
        else:
            rows.append(axis_vals + [getattr(cell, f) for f in METRIC_FIELDS] + ["false"])
    write_csv(path, header, rows)


def write_sweep_sidecar(result: SweepResult, path: str, command: str,
                        wall_time_s: float, extra: dict | None = None) -> None:
    grids = {name: [float(x) for x in ax]
             for name, ax in zip(result.axis_names, result.axes)}
    payload = provenance(command, result.base_params.as_dict(),
                         extra={"swept": list(result.axis_names), "grids": grids,
                                **(extra or {})},
                         wall_time_s=wall_time_s)
    write_json(path, payload)


def run_timed(fn, *args, **kwargs):
    """Helper returning (result, elapsed seconds) for provenance records."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
