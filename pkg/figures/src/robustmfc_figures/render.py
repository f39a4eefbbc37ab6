"""Figure rendering from the solver's CSV outputs.

Six figure ids, each mirroring one analysis view: closed-loop paths, the
adversary-strength sweep, the robustness-efficiency grid with cross-sections,
parameter sensitivity, control saturation, and the loss-of-control map. The
renderers consume only files (never recompute model quantities) and produce
deterministic images: fixed style, no timestamps, salted SVG ids.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = ("paths", "adversary", "tradeoff", "sensitivity", "saturation", "lossmap")

SWEEP_METRICS = ("J", "J_pen", "m_T", "v_T", "u_bar", "pi_bar",
                 "theta_peak", "xi_peak", "S_u", "S_pi")

SENSITIVITY_PARAMS = ("eta", "chi", "beta", "kappa", "R_u", "R")

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "robustmfc-figures",
}


class RenderError(Exception):
    """Input file missing, malformed, or schema-incompatible."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: dict[str, str]          # role -> file path
    output: str                     # image path; suffix selects PNG or SVG

    def __post_init__(self) -> None:
        if self.figure_id not in FIGURE_IDS:
            raise RenderError(f"unknown figure id {self.figure_id!r}; "
                              f"expected one of {', '.join(FIGURE_IDS)}")
        fmt = os.path.splitext(self.output)[1].lower()
        if fmt not in (".png", ".svg"):
            raise RenderError(f"output must be .png or .svg, got {self.output!r}")


@dataclass(frozen=True)
class RenderResult:
    figure_id: str
    output: str
    n_panels: int


@dataclass
class Table:
    """One parsed CSV: named columns of floats, masked rows split out."""

    path: str
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    mask: np.ndarray | None = None  # True where the row carried the sentinel

    def col(self, name: str) -> np.ndarray:
        return self.columns[name]


def read_table(path: str, required: tuple[str, ...]) -> Table:
    """Parse a CSV, check the schema, convert cells ("breakdown" -> NaN)."""
    if not os.path.exists(path):
        raise RenderError(f"input file missing: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError(f"{path}: empty file") from None
        rows = list(reader)
    missing = [c for c in required if c not in header]
    if missing:
        raise RenderError(
            f"{path}: schema mismatch: missing columns {', '.join(missing)}; "
            f"found {', '.join(header)}")
    if not rows:
        raise RenderError(f"{path}: no data rows")

    idx = {name: header.index(name) for name in header}
    mask = np.array([any(cell == "breakdown" for cell in r) for r in rows])
    columns: dict[str, np.ndarray] = {}
    for name in header:
        vals = []
        for r in rows:
            cell = r[idx[name]]
            if cell == "breakdown":
                vals.append(math.nan)
            elif cell in ("true", "false"):
                vals.append(1.0 if cell == "true" else 0.0)
            else:
                vals.append(float(cell))
        columns[name] = np.array(vals)
    return Table(path=path, columns=columns, mask=mask)


def _baseline_marker(path: str, name: str) -> float | None:
    """Baseline parameter value from the CSV's provenance sidecar, if present."""
    side = path + ".provenance.json"
    if not os.path.exists(side):
        return None
    try:
        with open(side, encoding="utf-8") as fh:
            return float(json.load(fh)["params"][name])
    except (KeyError, ValueError, json.JSONDecodeError):
        return None


def _save(fig, spec: FigureSpec) -> None:
    kwargs = {}
    if spec.output.lower().endswith(".svg"):
        kwargs["metadata"] = {"Date": None}
    fig.savefig(spec.output, **kwargs)
    plt.close(fig)


def _render_paths(spec: FigureSpec) -> int:
    series = sorted(spec.inputs.items())
    if not series:
        raise RenderError("paths figure needs at least one trajectory CSV")
    fig, axes = plt.subplots(2, 2, figsize=(8, 5.6), constrained_layout=True)
    panels = [("m", "mean liquidity gap"), ("v", "variance"),
              ("u", "policy rate"), ("pi", "monitoring intensity")]
    for ax, (colname, title) in zip(axes.flat, panels):
        for label, path in series:
            tab = read_table(path, ("t", "m", "v", "u", "pi", "theta", "xi"))
            ax.plot(tab.col("t"), tab.col(colname), label=label)
        ax.set_title(title)
        ax.set_xlabel("t")
    axes.flat[0].legend(loc="best", fontsize=7)
    _save(fig, spec)
    return 4


def _sweep_inputs(spec: FigureSpec, role: str, axis: str) -> Table:
    path = spec.inputs.get(role)
    if path is None:
        raise RenderError(f"{spec.figure_id} figure needs the {role!r} input")
    return read_table(path, (axis,) + SWEEP_METRICS + ("breakdown",))


def _render_adversary(spec: FigureSpec) -> int:
    tab = _sweep_inputs(spec, "sweep", "lambda")
    ok = ~tab.mask
    lam = tab.col("lambda")[ok]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2), constrained_layout=True)
    axes[0].plot(lam, tab.col("J")[ok], color="tab:red")
    axes[0].set_title("total cost")
    axes[0].set_xlabel("adversary strength")

    axes[1].plot(lam, tab.col("u_bar")[ok], label="mean policy rate")
    ax1b = axes[1].twinx()
    ax1b.plot(lam, tab.col("pi_bar")[ok], color="tab:orange",
              label="mean monitoring")
    axes[1].set_title("average controls")
    axes[1].set_xlabel("adversary strength")

    axes[2].plot(lam, tab.col("theta_peak")[ok], label="peak drift distortion")
    axes[2].plot(lam, tab.col("xi_peak")[ok], label="peak dispersion distortion")
    axes[2].set_title("peak distortions")
    axes[2].set_xlabel("adversary strength")
    axes[2].legend(fontsize=7)
    _save(fig, spec)
    return 3


def _grid_from_long(tab: Table, ax0: str, ax1: str, metric: str):
    x0 = np.unique(tab.col(ax0))
    x1 = np.unique(tab.col(ax1))
    Z = np.full((len(x0), len(x1)), np.nan)
    i0 = np.searchsorted(x0, tab.col(ax0))
    i1 = np.searchsorted(x1, tab.col(ax1))
    Z[i0, i1] = tab.col(metric)
    return x0, x1, Z


def _render_tradeoff(spec: FigureSpec) -> int:
    grid = _sweep_inputs(spec, "grid", "lambda_m")
    xm = _sweep_inputs(spec, "xsec_lambda_m", "lambda_m")
    xv = _sweep_inputs(spec, "xsec_lambda_v", "lambda_v")

    fig, axes = plt.subplots(2, 3, figsize=(11, 6.4), constrained_layout=True)
    heat = [("J", "total cost"), ("u_bar", "average policy rate"),
            ("pi_bar", "average monitoring"), ("v_T", "terminal variance")]
    flat = list(axes.flat)
    for ax, (metric, title) in zip(flat[:4], heat):
        lm, lv, Z = _grid_from_long(grid, "lambda_m", "lambda_v", metric)
        pc = ax.pcolormesh(lv, lm, Z, shading="nearest")
        fig.colorbar(pc, ax=ax, shrink=0.85)
        ax.set_title(title)
        ax.set_xlabel("dispersion adversary")
        ax.set_ylabel("drift adversary")

    for ax, tab, axis, fixed in ((flat[4], xm, "lambda_m", "dispersion"),
                                 (flat[5], xv, "lambda_v", "drift")):
        ok = ~tab.mask
        ax.plot(tab.col(axis)[ok], tab.col("u_bar")[ok], label="mean policy rate")
        twin = ax.twinx()
        twin.plot(tab.col(axis)[ok], tab.col("pi_bar")[ok], color="tab:orange",
                  label="mean monitoring")
        ax.set_xlabel(axis.replace("_", " "))
        ax.set_title(f"response ({fixed} adversary fixed)")
    _save(fig, spec)
    return 6


def _per_param_panels(spec: FigureSpec, draw) -> int:
    fig, axes = plt.subplots(2, 3, figsize=(11, 6.4), constrained_layout=True)
    for ax, name in zip(axes.flat, SENSITIVITY_PARAMS):
        role = f"sweep_{name}"
        path = spec.inputs.get(role)
        if path is None:
            raise RenderError(f"{spec.figure_id} figure needs the {role!r} input")
        tab = read_table(path, (name,) + SWEEP_METRICS + ("breakdown",))
        draw(ax, name, tab)
        base = _baseline_marker(path, name)
        if base is not None:
            ax.axvline(base, color="gray", linestyle=":", linewidth=1)
        ax.set_xlabel(name)
    _save(fig, spec)
    return 6


def _render_sensitivity(spec: FigureSpec) -> int:
    def draw(ax, name, tab):
        ok = ~tab.mask
        ax.plot(tab.col(name)[ok], tab.col("J")[ok], color="tab:red",
                label="total cost")
        twin = ax.twinx()
        twin.plot(tab.col(name)[ok], tab.col("v_T")[ok], color="tab:blue",
                  label="terminal variance")
        ax.set_title(f"cost and terminal variance vs {name}")

    return _per_param_panels(spec, draw)


def _render_saturation(spec: FigureSpec) -> int:
    def draw(ax, name, tab):
        ok = ~tab.mask
        ax.plot(tab.col(name)[ok], tab.col("S_u")[ok], label="rate at bounds")
        ax.plot(tab.col(name)[ok], tab.col("S_pi")[ok],
                label="monitoring at bounds")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"saturation vs {name}")
        ax.legend(fontsize=6)

    return _per_param_panels(spec, draw)


def _render_lossmap(spec: FigureSpec) -> int:
    tab = _sweep_inputs(spec, "map", "chi")
    chi, beta, layer = _grid_from_long(tab, "chi", "beta", "S_u")
    _, _, s_pi = _grid_from_long(tab, "chi", "beta", "S_pi")
    layer = layer + s_pi
    _, _, J = _grid_from_long(tab, "chi", "beta", "J")

    fig, ax = plt.subplots(figsize=(7, 5.2), constrained_layout=True)
    pc = ax.pcolormesh(chi, beta, layer.T, shading="nearest", vmin=0.0, vmax=2.0)
    fig.colorbar(pc, ax=ax, label="total time at bounds")
    masked = np.isnan(layer.T)
    if np.any(masked):
        bb, cc = np.where(masked)
        ax.plot(chi[cc], beta[bb], "x", color="red", markersize=5,
                label="robustness breakdown")
        ax.legend(fontsize=7, loc="upper right")
    finite = np.isfinite(J.T)
    if finite.sum() > 4 and len(chi) > 2 and len(beta) > 2:
        ax.contour(chi, beta, np.where(finite, J.T, np.nan), levels=8,
                   colors="white", linewidths=0.7)
    ax.set_xlabel("monitoring effectiveness")
    ax.set_ylabel("mean reversion")
    ax.set_title("loss-of-control map")
    _save(fig, spec)
    return 1


_RENDERERS = {
    "paths": _render_paths,
    "adversary": _render_adversary,
    "tradeoff": _render_tradeoff,
    "sensitivity": _render_sensitivity,
    "saturation": _render_saturation,
    "lossmap": _render_lossmap,
}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; raises RenderError on any input problem."""
    with plt.rc_context(_STYLE):
        n = _RENDERERS[spec.figure_id](spec)
    return RenderResult(figure_id=spec.figure_id, output=spec.output, n_panels=n)


def discover_inputs(figure_id: str, in_dir: str) -> dict[str, str]:
    """Map the default robustmfc output filenames to renderer roles."""
    if figure_id == "paths":
        names = sorted(f for f in os.listdir(in_dir)
                       if f.startswith("trajectory") and f.endswith(".csv"))
        return {os.path.splitext(n)[0]: os.path.join(in_dir, n) for n in names}
    if figure_id == "adversary":
        return {"sweep": os.path.join(in_dir, "sweep_adversary.csv")}
    if figure_id == "tradeoff":
        return {"grid": os.path.join(in_dir, "tradeoff.csv"),
                "xsec_lambda_m": os.path.join(in_dir, "tradeoff_xsec_lambda_m.csv"),
                "xsec_lambda_v": os.path.join(in_dir, "tradeoff_xsec_lambda_v.csv")}
    if figure_id in ("sensitivity", "saturation"):
        return {f"sweep_{name}": os.path.join(in_dir, f"sensitivity_{name}.csv")
                for name in SENSITIVITY_PARAMS}
    if figure_id == "lossmap":
        return {"map": os.path.join(in_dir, "loss_map.csv")}
    raise RenderError(f"unknown figure id {figure_id!r}")
