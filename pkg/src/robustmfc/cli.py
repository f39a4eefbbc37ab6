"""Command-line entry point: config ingestion, experiment harnesses, CSV/JSON emission.

Exit codes: 0 success, 2 configuration/usage problems (violations printed),
1 internal fault. All numeric output is serialized with 17 significant digits
so byte-identical reruns are checkable; provenance sidecars carry wall times
and are excluded from determinism comparisons.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import traceback

import numpy as np

from . import __version__, experiments, forward, particle, riccati, sensitivity
from ._io import provenance, write_csv, write_json
from .forward import METRIC_FIELDS
from .model import ModelParams, apply_overrides, load_config, validate


class ConfigError(Exception):
    """User-facing configuration problem (exit 2)."""


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat JSON file of ModelParams fields")
    sub.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                     help="override one parameter (repeatable)")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="RNG seed")
    sub.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                     help="process pool size for sweep cells")
    sub.add_argument("--grid", action="append", default=[],
                     metavar="NAME=START:STOP:COUNT",
                     help="override a sweep grid (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustmfc",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    subs = ap.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="one backward+forward solve")
    sim.add_argument("--tag", default=None, help="suffix for output file names")
    sim.add_argument("--dump-riccati", action="store_true",
                     help="also write the coefficient trajectories")

    subs.add_parser("sweep-adversary", help="symmetric adversary-strength sweep")
    subs.add_parser("asymmetric", help="four asymmetric adversary cases")
    subs.add_parser("tradeoff", help="2-D adversary grid with cross-sections")

    sens = subs.add_parser("sensitivity", help="parameter sweeps with saturation")
    sens.add_argument("--param", default="all",
                      choices=list(experiments.SWEEPABLE) + ["all"])

    subs.add_parser("loss-map", help="loss-of-control map over (chi, beta)")

    part = subs.add_parser("particles", help="one N-bank stochastic simulation")
    part.add_argument("--N", type=int, default=1024)

    poc = subs.add_parser("poc", help="propagation-of-chaos convergence experiment")
    poc.add_argument("--N-list", default="64,256,1024,4096")
    poc.add_argument("--replications", type=int, default=8)

    grad = subs.add_parser("gradcheck", help="finite-difference check of the "
                                             "variational sensitivities")
    grad.add_argument("--nodes", type=int, default=1001)
    grad.add_argument("--tol", type=float, default=1e-4)

    loss = subs.add_parser("loss-bound", help="quadratic robustness-loss experiment")
    loss.add_argument("--drift-param", default="beta", choices=["beta", "eta"])
    loss.add_argument("--eps", default="0.02,0.04,0.08,0.16")

    for name, sub in subs.choices.items():
        _add_common(sub)
    return ap


def _resolve_params(args: argparse.Namespace) -> ModelParams:
    try:
        params = load_config(args.config) if args.config else ModelParams()
        params = apply_overrides(params, args.set)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    report = validate(params)
    if not report.ok:
        raise ConfigError("invalid parameters:\n  " + "\n  ".join(report.violations))
    return params


def _parse_grids(args: argparse.Namespace) -> dict[str, np.ndarray]:
    grids: dict[str, np.ndarray] = {}
    for item in args.grid:
        try:
            name, spec = item.split("=", 1)
            start, stop, count = spec.split(":")
            grids[name.strip()] = np.linspace(float(start), float(stop), int(count))
        except ValueError as exc:
            raise ConfigError(f"--grid expects NAME=START:STOP:COUNT, got {item!r}") from exc
    return grids


def _outdir(args: argparse.Namespace) -> str:
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out}: {exc}") from exc
    return out


def _need_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise ConfigError("this command is stochastic: --seed is required")
    return args.seed


def _sidecar(path: str, command: str, params: ModelParams, wall: float,
             extra: dict | None = None) -> None:
    write_json(path + ".provenance.json",
               provenance(command, params.as_dict(), extra, wall))


def _cmd_simulate(args, params: ModelParams, out: str) -> None:
    tag = f"_{args.tag}" if args.tag else ""
    t0 = time.perf_counter()
    sol = riccati.solve_backward(params)
    if not sol.bounded:
        raise ConfigError(
            f"Riccati solution blows up at t* = {sol.t_star:.6g}; "
            "parameters are outside the stable region")
    traj = forward.simulate(params, sol)
    wall = time.perf_counter() - t0
    tpath = os.path.join(out, f"trajectory{tag}.csv")
    forward.dump_csv(traj, tpath)
    forward.dump_metrics_json(traj.metrics, os.path.join(out, f"metrics{tag}.json"))
    _sidecar(tpath, "simulate", params, wall)
    if args.dump_riccati:
        rpath = os.path.join(out, f"riccati{tag}.csv")
        riccati.dump_csv(sol, rpath)
        _sidecar(rpath, "simulate --dump-riccati", params, wall)


def _cmd_sweep_adversary(args, params: ModelParams, out: str) -> None:
    grids = _parse_grids(args)
    grid = grids.get("lambda", np.linspace(0.0, 0.2, 25))
    res, wall = experiments.run_timed(experiments.adversary_sweep, params, grid,
                                      workers=args.workers)
    path = os.path.join(out, "sweep_adversary.csv")
    experiments.write_sweep_csv(res, path)
    experiments.write_sweep_sidecar(res, path + ".provenance.json",
                                    "sweep-adversary", wall)


def _cmd_asymmetric(args, params: ModelParams, out: str) -> None:
    t0 = time.perf_counter()
    cases = experiments.asymmetric_cases(params, workers=args.workers)
    wall = time.perf_counter() - t0
    path = os.path.join(out, "asymmetric.csv")
    header = ["lambda_m", "lambda_v"] + list(METRIC_FIELDS) + ["breakdown"]
    rows = []
    for (lm, lv), cell in cases:
        if cell is None:
            rows.append([lm, lv] + ["breakdown"] * len(METRIC_FIELDS) + ["true"])
        else:
            rows.append([lm, lv] + [getattr(cell, f) for f in METRIC_FIELDS] + ["false"])
    write_csv(path, header, rows)
    _sidecar(path, "asymmetric", params, wall,
             {"cases": [list(c) for c, _ in cases]})


def _cmd_tradeoff(args, params: ModelParams, out: str) -> None:
    grids = _parse_grids(args)
    lm = grids.get("lambda_m", np.linspace(0.005, 0.2, 40))
    lv = grids.get("lambda_v", np.linspace(0.005, 0.2, 40))
    res, wall = experiments.run_timed(experiments.tradeoff_grid, params, lm, lv,
                                      workers=args.workers)
    path = os.path.join(out, "tradeoff.csv")
    experiments.write_sweep_csv(res.grid, path)
    experiments.write_sweep_sidecar(res.grid, path + ".provenance.json", "tradeoff",
                                    wall, {"xsec_at": res.xsec_at})
    for name, xsec in (("tradeoff_xsec_lambda_m", res.xsec_lambda_m),
                       ("tradeoff_xsec_lambda_v", res.xsec_lambda_v)):
        xpath = os.path.join(out, f"{name}.csv")
        experiments.write_sweep_csv(xsec, xpath)
        experiments.write_sweep_sidecar(xsec, xpath + ".provenance.json",
                                        "tradeoff", wall, {"xsec_at": res.xsec_at})


def _cmd_sensitivity(args, params: ModelParams, out: str) -> None:
    grids = _parse_grids(args)
    names = list(experiments.SWEEPABLE) if args.param == "all" else [args.param]
    for name in names:
        grid = grids.get(name, experiments.default_grid(params, name))
        res, wall = experiments.run_timed(experiments.parameter_sensitivity,
                                          params, name, grid, workers=args.workers)
        path = os.path.join(out, f"sensitivity_{name}.csv")
        experiments.write_sweep_csv(res, path)
        experiments.write_sweep_sidecar(res, path + ".provenance.json",
                                        "sensitivity", wall,
                                        {"grid_default": "0.4x..1.6x baseline"})


def _cmd_loss_map(args, params: ModelParams, out: str) -> None:
    grids = _parse_grids(args)
    chi = grids.get("chi", np.linspace(0.05, 2.0, 40))
    beta = grids.get("beta", np.linspace(0.0125, 0.5, 40))
    res, wall = experiments.run_timed(experiments.loss_map, params, chi, beta,
                                      workers=args.workers)
    path = os.path.join(out, "loss_map.csv")
    experiments.write_sweep_csv(res, path)
    experiments.write_sweep_sidecar(res, path + ".provenance.json", "loss-map", wall)


def _cmd_particles(args, params: ModelParams, out: str) -> None:
    seed = _need_seed(args)
    t0 = time.perf_counter()
    sol = riccati.solve_backward(params)
    if not sol.bounded:
        raise ConfigError("Riccati solution blows up; cannot drive the bank system")
    traj = forward.simulate(params, sol)
    ens = particle.simulate_nbank(params, args.N, seed, traj.u, traj.theta,
                                  with_coupled_limit=True, m_ref=traj.m)
    wall = time.perf_counter() - t0
    path = os.path.join(out, "particles.csv")
    cl = ens.coupled_limit
    write_csv(path, ["t", "m_emp", "v_emp", "m_cond", "v_cond", "sup_gap",
                     "m_det", "v_det"],
              zip(ens.times, ens.m_emp, ens.v_emp, cl.m_cond, cl.v_cond,
                  cl.sup_gap, traj.m, traj.v))
    _sidecar(path, "particles", params, wall, {"N": args.N, "seed": seed})


def _cmd_poc(args, params: ModelParams, out: str) -> None:
    seed = _need_seed(args)
    try:
        n_list = [int(x) for x in args.N_list.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--N-list expects comma-separated integers: {exc}") from exc
    t0 = time.perf_counter()
    res = particle.poc_experiment(params, n_list, args.replications, seed)
    wall = time.perf_counter() - t0
    path = os.path.join(out, "poc.csv")
    particle.write_poc_csv(res, path)
    particle.write_poc_summary(res, os.path.join(out, "poc_summary.json"))
    _sidecar(path, "poc", params, wall,
             {"N_list": n_list, "replications": args.replications, "seed": seed})


def _cmd_gradcheck(args, params: ModelParams, out: str) -> None:
    t0 = time.perf_counter()
    sol = riccati.solve_backward(params, n_nodes=args.nodes)
    if not sol.bounded:
        raise ConfigError("gradcheck requires a stable baseline")
    rows = []
    worst = 0.0
    for name in sensitivity.SENSITIVITY_FIELDS:
        err = sensitivity.fd_check(params, sol, sensitivity.SensitivityDirection.unit(name))
        worst = max(worst, err)
        rows.append([name, err, args.tol, "true" if err <= args.tol else "false"])
    wall = time.perf_counter() - t0
    path = os.path.join(out, "gradcheck.csv")
    write_csv(path, ["direction", "max_rel_err", "tol", "pass"], rows)
    write_json(os.path.join(out, "gradcheck_summary.json"),
               {"worst_rel_err": worst, "tol": args.tol,
                "ok": worst <= args.tol, "nodes": args.nodes})
    _sidecar(path, "gradcheck", params, wall)
    if worst > args.tol:
        raise RuntimeError(f"gradcheck failed: worst relative error {worst:.3e}")


def _cmd_loss_bound(args, params: ModelParams, out: str) -> None:
    try:
        eps = [float(x) for x in args.eps.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--eps expects comma-separated floats: {exc}") from exc
    t0 = time.perf_counter()
    res = sensitivity.robustness_loss_experiment(params, args.drift_param, eps)
    wall = time.perf_counter() - t0
    path = os.path.join(out, "loss_bound.csv")
    rows = [[args.drift_param, e,
             g if g is not None else "breakdown",
             "false" if g is not None else "true"]
            for e, g in zip(res.eps, res.gaps)]
    write_csv(path, ["direction", "eps", "gap", "masked"], rows)
    write_json(os.path.join(out, "loss_bound_summary.json"),
               {"drift_param": args.drift_param, "eps": list(res.eps),
                "slope": res.slope, "adversary": res.adversary})
    _sidecar(path, "loss-bound", params, wall)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep-adversary": _cmd_sweep_adversary,
    "asymmetric": _cmd_asymmetric,
    "tradeoff": _cmd_tradeoff,
    "sensitivity": _cmd_sensitivity,
    "loss-map": _cmd_loss_map,
    "particles": _cmd_particles,
    "poc": _cmd_poc,
    "gradcheck": _cmd_gradcheck,
    "loss-bound": _cmd_loss_bound,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return 0 if not exc.code else 2
    try:
        params = _resolve_params(args)
        out = _outdir(args)
        _COMMANDS[args.command](args, params, out)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
