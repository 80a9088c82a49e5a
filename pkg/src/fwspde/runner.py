"""Command dispatch: validated config in, data files plus manifest out."""

from __future__ import annotations

import os

import numpy as np

from .action import (
    ActionProblem,
    OptimizerOptions,
    TargetBall,
    TargetPoint,
    minimize_action,
    quasipotential,
)
from .bases import SpectralField
from .config import (
    ExperimentConfig,
    RunManifest,
    _field,
    _float_list,
    _integer,
    _no_unknown,
    _number,
    _require,
    _string,
    build_control,
    export_plotdata,
    finalize_run,
    write_csv,
    write_json,
)
from .errors import RangeError, SchemaError
from .exits import (
    ExitDomain,
    ExitProblem,
    exit_place_histogram,
    exit_scaling,
    verify_attraction,
)
from .ldp import TubeExperiment, ldp_lower_bound_check, ldp_upper_bound_check, uniform_sweep
from .models import ModelSpec
from .paths import TimeGrid
from .rng import path_seeds
from .simulate import SimConfig, sample_functionals, truncation_error
from .skeleton import mild_residual, model_grid, solve_skeleton


def _eps_list(params, path, key="eps_list", decreasing=True):
    eps = _float_list(params, key, path)
    if not eps or any(e <= 0 for e in eps):
        raise RangeError(f"{path}.{key}", "entries must be positive")
    if decreasing and any(b >= a for a, b in zip(eps, eps[1:])):
        raise RangeError(f"{path}.{key}", "must be strictly decreasing")
    return tuple(eps)


def _quasipotential_block(params, path):
    block = _require(params, "quasipotential", path, dict)
    _no_unknown(block, f"{path}.quasipotential",
                ("horizons", "control_dt", "target_tol"))
    horizons = _float_list(block, "horizons", f"{path}.quasipotential")
    if not horizons or any(t <= 0 for t in horizons):
        raise RangeError(f"{path}.quasipotential.horizons",
                         "entries must be positive")
    control_dt = _number(block, "control_dt", f"{path}.quasipotential",
                         default=0.0, minimum=0.0)
    tol = _number(block, "target_tol", f"{path}.quasipotential",
                  default=1e-3, minimum=0.0, strict_min=True)
    return horizons, control_dt, tol


def _quasipotential_ref(model, params, path, domain):
    horizons, control_dt, tol = _quasipotential_block(params, path)
    return quasipotential(model, domain.center,
                          TargetBall(domain.center, domain.radius, tol),
                          horizons, control_dt=control_dt or None)


def _domain(model, params, path):
    radius = _number(params, "radius", path, minimum=0.0, strict_min=True)
    norm = _string(params, "domain_norm", path, choices=("l2", "sup"),
                   default="l2")
    center = _field(model, params.get("center"), f"{path}.center")
    return ExitDomain(center, radius, norm)


# -- load-time validation -------------------------------------------------------

_PARAM_KEYS = {
    "simulate": ("eps", "n_paths", "x0", "record_times", "n_dump_paths",
                 "noise_truncation", "gzip_paths"),
    "skeleton": ("x0", "control"),
    "action": ("x0", "target_y", "target_tol", "horizon", "control_dt",
               "penalty_weight", "optimizer"),
    "quasipotential": ("origin", "target_point", "ball_radius", "horizons",
                       "control_dt", "target_tol"),
    "ldp-lower": ("delta", "eps_list", "n_paths", "tolerance_margin", "x0",
                  "reference"),
    "ldp-upper": ("s0", "delta", "eps_list", "n_paths", "tolerance_margin",
                  "x0"),
    "sweep": ("ball_radius", "probe_modes", "delta", "eps_list", "n_paths",
              "tolerance_margin", "reference"),
    "exit-scaling": ("radius", "domain_norm", "center", "x0", "eps_list",
                     "n_paths", "max_steps", "eta", "quasipotential",
                     "dump_samples"),
    "exit-place": ("radius", "domain_norm", "center", "x0", "eps_list",
                   "n_paths", "max_steps", "partition"),
    "verify": ("radius", "domain_norm", "center", "probes", "auto_probes",
               "horizon", "rho"),
}


def validate_params(model: ModelSpec, command: str, p: dict):
    """Structural and range validation of one command block.

    Called at config load; runners re-derive the same values when they
    execute.  Must stay free of heavy computation.
    """
    path = command
    _no_unknown(p, path, _PARAM_KEYS[command])
    if command == "simulate":
        _number(p, "eps", path, minimum=0.0)
        _integer(p, "n_paths", path, minimum=1)
        _field(model, p.get("x0"), f"{path}.x0")
        _integer(p, "n_dump_paths", path, default=0, minimum=0)
        _integer(p, "noise_truncation", path, default=0, minimum=0)
        _require(p, "gzip_paths", path, bool, default=False)
        grid = model_grid(model)
        for i, t in enumerate(_float_list(p, "record_times", path,
                                          default=[model.t_end])):
            node = round(t / grid.dt)
            if not 0 <= node <= grid.n_steps or abs(node * grid.dt - t) > 1e-9:
                raise RangeError(f"{path}.record_times[{i}]",
                                 "must land on a grid node")
    elif command == "skeleton":
        _field(model, p.get("x0"), f"{path}.x0")
        if "control" in p:
            block = _require(p, "control", path, dict)
            _no_unknown(block, f"{path}.control",
                        ("kind", "value", "values", "target",
                         "normalize_action"))
            _string(block, "kind", f"{path}.control",
                    choices=("zero", "constant", "values", "reach"))
    elif command == "action":
        _field(model, _require(p, "target_y", path, list),
               f"{path}.target_y")
        _field(model, p.get("x0"), f"{path}.x0")
        _number(p, "target_tol", path, default=1e-3, minimum=0.0,
                strict_min=True)
        _number(p, "horizon", path, default=model.t_end, minimum=0.0,
                strict_min=True)
        _number(p, "penalty_weight", path, default=10.0, minimum=0.0,
                strict_min=True)
        _optimizer_options(p, path)
    elif command == "quasipotential":
        horizons = _float_list(p, "horizons", path)
        if not horizons or any(t <= 0 for t in horizons):
            raise RangeError(f"{path}.horizons", "entries must be positive")
        if "target_point" in p:
            _field(model, p["target_point"], f"{path}.target_point")
        elif "ball_radius" in p:
            _number(p, "ball_radius", path, minimum=0.0, strict_min=True)
        else:
            raise SchemaError(path, "needs target_point or ball_radius")
    elif command == "ldp-lower":
        _number(p, "delta", path, minimum=0.0, strict_min=True)
        _eps_list(p, path)
        _integer(p, "n_paths", path, minimum=1)
        _field(model, p.get("x0"), f"{path}.x0")
        _require(p, "reference", path, dict)
    elif command == "ldp-upper":
        _number(p, "s0", path, minimum=0.0)
        _number(p, "delta", path, minimum=0.0, strict_min=True)
        _eps_list(p, path)
        _integer(p, "n_paths", path, minimum=1)
        _field(model, p.get("x0"), f"{path}.x0")
    elif command == "sweep":
        _number(p, "ball_radius", path, minimum=0.0)
        _number(p, "delta", path, minimum=0.0, strict_min=True)
        _eps_list(p, path)
        _integer(p, "n_paths", path, minimum=1)
        _require(p, "reference", path, dict)
    elif command == "exit-scaling":
        _domain(model, p, path)
        _eps_list(p, path)
        _integer(p, "n_paths", path, minimum=1)
        _integer(p, "max_steps", path, minimum=1)
        _number(p, "eta", path, default=0.25, minimum=0.0, strict_min=True)
        _quasipotential_block(p, path)
    elif command == "exit-place":
        _domain(model, p, path)
        _eps_list(p, path)
        _integer(p, "n_paths", path, minimum=1)
        _integer(p, "max_steps", path, minimum=1)
        for i, cell in enumerate(_require(p, "partition", path, list)):
            if not isinstance(cell, dict):
                raise SchemaError(f"{path}.partition[{i}]",
                                  "must be an object")
    elif command == "verify":
        _domain(model, p, path)
        _number(p, "horizon", path, minimum=0.0, strict_min=True)
        _number(p, "rho", path, minimum=0.0, strict_min=True)


# -- commands -----------------------------------------------------------------

def _run_simulate(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "simulate"
    _no_unknown(p, path, ("eps", "n_paths", "x0", "record_times",
                          "n_dump_paths", "noise_truncation", "gzip_paths"))
    eps = _number(p, "eps", path, minimum=0.0)
    n_paths = _integer(p, "n_paths", path, minimum=1)
    x0 = _field(model, p.get("x0"), f"{path}.x0")
    grid = model_grid(model)
    times = _float_list(p, "record_times", path, default=[model.t_end])
    idx = []
    for i, t in enumerate(times):
        node = round(t / grid.dt)
        if not 0 <= node <= grid.n_steps or abs(node * grid.dt - t) > 1e-9:
            raise RangeError(f"{path}.record_times[{i}]",
                             "must land on a grid node")
        idx.append(node)
    n_dump = _integer(p, "n_dump_paths", path, default=min(10, n_paths),
                      minimum=0)
    trunc = _integer(p, "noise_truncation", path, default=0, minimum=0)
    cfg = SimConfig(eps, grid, config.master_seed, trunc)
    _, recorded = sample_functionals(model, x0, cfg, n_paths,
                                     record_nodes=idx, threads=threads)
    written = {}
    rows = []
    for i, node in enumerate(idx):
        for k in range(model.basis.n_modes):
            vals = recorded[:, i, k]
            var = float(np.var(vals, ddof=1)) if n_paths > 1 else 0.0
            se_var = var * np.sqrt(2.0 / (n_paths - 1)) if n_paths > 2 else np.nan
            rows.append([node * grid.dt, k, float(np.mean(vals)), var, se_var])
    written["moments.csv"] = write_csv(
        os.path.join(out_dir, "moments.csv"),
        ["t", "mode", "mean", "var", "se_var"], rows)
    if n_dump:
        from .config import write_csv_gz
        from .simulate import simulate
        dump = []
        for pth in range(n_dump):
            seed = path_seeds(config.master_seed, 1, pth, pth + 1)[0]
            sample = simulate(model, x0, SimConfig(eps, grid, int(seed), trunc))
            for n, t in enumerate(grid.nodes):
                for k in range(model.basis.n_modes):
                    dump.append([pth, t, k, sample.trajectory.coeffs[n, k]])
        header = ["path_id", "t", "mode", "coeff"]
        if _require(p, "gzip_paths", path, bool, default=False):
            written["paths.csv.gz"] = write_csv_gz(
                os.path.join(out_dir, "paths.csv.gz"), header, dump)
        else:
            written["paths.csv"] = write_csv(
                os.path.join(out_dir, "paths.csv"), header, dump)
    report = {
        "eps": eps, "n_paths": n_paths,
        "record_nodes": idx,
        "truncation_error": truncation_error(model, cfg.truncation(model)),
    }
    written["report.json"] = write_json(os.path.join(out_dir, "report.json"),
                                        report)
    return written


def _run_skeleton(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "skeleton"
    _no_unknown(p, path, ("x0", "control"))
    x0 = _field(model, p.get("x0"), f"{path}.x0")
    grid = model_grid(model)
    u = None
    if "control" in p:
        u = build_control(_require(p, "control", path, dict), model, grid,
                          x0, f"{path}.control")
    traj = solve_skeleton(model, x0, u)
    residual = mild_residual(traj, model, u)
    rows = []
    for n, t in enumerate(grid.nodes):
        for k in range(model.basis.n_modes):
            rows.append([n, t, k, traj.coeffs[n, k]])
    written = {"trajectory.csv": write_csv(
        os.path.join(out_dir, "trajectory.csv"),
        ["node", "t", "mode", "coeff"], rows)}
    report = {
        "mild_residual": residual,
        "terminal_l2": float(np.linalg.norm(traj.coeffs[-1])),
        "control_energy": u.energy if u is not None else 0.0,
    }
    written["report.json"] = write_json(os.path.join(out_dir, "report.json"),
                                        report)
    return written


def _optimizer_options(p, path):
    block = _require(p, "optimizer", path, dict, default={})
    _no_unknown(block, f"{path}.optimizer",
                ("max_iters", "grad_tol", "penalty_rounds", "action_ceiling"))
    return OptimizerOptions(
        max_iters=_integer(block, "max_iters", f"{path}.optimizer",
                           default=500, minimum=1),
        grad_tol=_number(block, "grad_tol", f"{path}.optimizer",
                         default=1e-9, minimum=0.0, strict_min=True),
        penalty_rounds=_integer(block, "penalty_rounds", f"{path}.optimizer",
                                default=14, minimum=1),
        action_ceiling=_number(block, "action_ceiling", f"{path}.optimizer",
                               default=1e6, minimum=0.0, strict_min=True),
    )


def _run_action(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "action"
    _no_unknown(p, path, ("x0", "target_y", "target_tol", "horizon",
                          "control_dt", "penalty_weight", "optimizer"))
    x0 = _field(model, p.get("x0"), f"{path}.x0")
    y = _field(model, _require(p, "target_y", path, list), f"{path}.target_y")
    tol = _number(p, "target_tol", path, default=1e-3, minimum=0.0,
                  strict_min=True)
    horizon = _number(p, "horizon", path, default=model.t_end, minimum=0.0,
                      strict_min=True)
    control_dt = _number(p, "control_dt", path, default=0.0, minimum=0.0)
    weight = _number(p, "penalty_weight", path, default=10.0, minimum=0.0,
                     strict_min=True)
    problem = ActionProblem(
        model, x0, TargetPoint(y, tol), horizon,
        control_grid=None if not control_dt else
        TimeGrid(horizon, max(1, round(horizon / control_dt))),
        penalty_weight=weight, optimizer=_optimizer_options(p, path))
    res = minimize_action(problem)
    report = {
        "action": res.action,
        "terminal_gap": res.terminal_gap,
        "converged": res.converged,
        "unreachable": res.unreachable,
        "iterations": res.iterations,
        "penalty_weight_final": res.penalty_weight,
    }
    written = {"action.json": write_json(os.path.join(out_dir, "action.json"),
                                         report)}
    grid_c = res.control.grid
    rows = []
    for n, t in enumerate(grid_c.nodes):
        for j in range(res.control.values.shape[1]):
            rows.append([n, t, j, res.control.values[n, j]])
    written["control.csv"] = write_csv(
        os.path.join(out_dir, "control.csv"),
        ["node", "t", "mode", "value"], rows)
    return written


def _run_quasipotential(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "quasipotential"
    _no_unknown(p, path, ("origin", "target_point", "ball_radius",
                          "horizons", "control_dt", "target_tol"))
    origin = _field(model, p.get("origin"), f"{path}.origin")
    horizons = _float_list(p, "horizons", path)
    if not horizons or any(t <= 0 for t in horizons):
        raise RangeError(f"{path}.horizons", "entries must be positive")
    tol = _number(p, "target_tol", path, default=1e-3, minimum=0.0,
                  strict_min=True)
    control_dt = _number(p, "control_dt", path, default=0.0, minimum=0.0)
    if "target_point" in p:
        target = TargetPoint(_field(model, p["target_point"],
                                    f"{path}.target_point"), tol)
    elif "ball_radius" in p:
        radius = _number(p, "ball_radius", path, minimum=0.0, strict_min=True)
        target = TargetBall(origin, radius, tol)
    else:
        raise SchemaError(path, "needs target_point or ball_radius")
    res = quasipotential(model, origin, target, horizons,
                         control_dt=control_dt or None)
    report = {
        "value": res.value,
        "best_horizon": res.best_horizon,
        "monotone_flag": res.monotone_flag,
        "per_horizon": [[t, v] for t, v in res.per_horizon],
    }
    written = {"quasipotential.json": write_json(
        os.path.join(out_dir, "quasipotential.json"), report)}
    written["per_horizon.csv"] = export_plotdata(
        report, "quasipotential", os.path.join(out_dir, "per_horizon.csv"))
    return written


def _ldp_report_dict(rep):
    return {
        "kind": rep.kind,
        "rows": [{
            "eps": r.eps, "p_hat": r.p_hat, "ci_low": r.ci_low,
            "ci_high": r.ci_high, "hits": r.hits, "n": r.n,
            "eps_log_p": r.eps_log_p, "margin": r.margin,
        } for r in rep.rows],
        "slope": None if rep.slope_fit is None else {
            "slope": rep.slope_fit.slope,
            "intercept": rep.slope_fit.intercept,
            "stderr": rep.slope_fit.stderr,
            "n_points": rep.slope_fit.n_points,
        },
        "margin": rep.margin,
        "tolerance_margin": rep.tolerance_margin,
        "passed": rep.passed,
        "vacuous": rep.vacuous,
        "surrogate": rep.surrogate,
        "note": rep.note,
    }


def _run_ldp_lower(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "ldp-lower"
    _no_unknown(p, path, ("delta", "eps_list", "n_paths", "tolerance_margin",
                          "x0", "reference"))
    delta = _number(p, "delta", path, minimum=0.0, strict_min=True)
    eps = _eps_list(p, path)
    n_paths = _integer(p, "n_paths", path, minimum=1)
    tol_margin = _number(p, "tolerance_margin", path, default=0.35,
                         minimum=0.0)
    x0 = _field(model, p.get("x0"), f"{path}.x0")
    grid = model_grid(model)
    control = build_control(_require(p, "reference", path, dict), model,
                            grid, x0, f"{path}.reference")
    ref = solve_skeleton(model, x0, control)
    exp = TubeExperiment(model, x0, ref, delta, eps, n_paths,
                         control.energy, config.master_seed)
    rep = ldp_lower_bound_check(exp, tol_margin, threads)
    report = _ldp_report_dict(rep)
    report["reference_action"] = control.energy
    written = {"ldp_lower.json": write_json(
        os.path.join(out_dir, "ldp_lower.json"), report)}
    written["ldp_lower.csv"] = export_plotdata(
        report, "ldp", os.path.join(out_dir, "ldp_lower.csv"))
    return written


def _run_ldp_upper(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "ldp-upper"
    _no_unknown(p, path, ("s0", "delta", "eps_list", "n_paths",
                          "tolerance_margin", "x0"))
    s0 = _number(p, "s0", path, minimum=0.0)
    delta = _number(p, "delta", path, minimum=0.0, strict_min=True)
    eps = _eps_list(p, path)
    n_paths = _integer(p, "n_paths", path, minimum=1)
    tol_margin = _number(p, "tolerance_margin", path, default=0.35,
                         minimum=0.0)
    x0 = _field(model, p.get("x0"), f"{path}.x0")
    rep = ldp_upper_bound_check(model, x0, s0, delta, eps, n_paths,
                                config.master_seed, tol_margin, threads)
    report = _ldp_report_dict(rep)
    written = {"ldp_upper.json": write_json(
        os.path.join(out_dir, "ldp_upper.json"), report)}
    written["ldp_upper.csv"] = export_plotdata(
        report, "ldp", os.path.join(out_dir, "ldp_upper.csv"))
    return written


def _run_sweep(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "sweep"
    _no_unknown(p, path, ("ball_radius", "probe_modes", "delta", "eps_list",
                          "n_paths", "tolerance_margin", "reference"))
    ball = _number(p, "ball_radius", path, minimum=0.0)
    probe_modes = _integer(p, "probe_modes", path,
                           default=model.basis.n_modes, minimum=1)
    delta = _number(p, "delta", path, minimum=0.0, strict_min=True)
    eps = _eps_list(p, path)
    n_paths = _integer(p, "n_paths", path, minimum=1)
    tol_margin = _number(p, "tolerance_margin", path, default=0.35,
                         minimum=0.0)
    grid = model_grid(model)
    control = build_control(_require(p, "reference", path, dict), model,
                            grid, model.basis.zero_field(), f"{path}.reference")
    rep = uniform_sweep(model, ball, control, delta, eps, n_paths,
                        config.master_seed, probe_modes, tol_margin, threads)
    report = {
        "points": [{"x0": list(q.x0), "margin": q.margin, "passed": q.passed}
                   for q in rep.points],
        "worst_margin": rep.worst_margin,
        "worst_x0": list(rep.worst_x0),
        "center_margin": rep.center_margin,
        "passed": rep.passed,
        "note": rep.note,
        "reference_action": control.energy,
    }
    written = {"sweep.json": write_json(os.path.join(out_dir, "sweep.json"),
                                        report)}
    written["sweep.csv"] = export_plotdata(
        report, "sweep", os.path.join(out_dir, "sweep.csv"))
    return written


def _exit_problem(config, path, need_quasipotential=True):
    model = config.model
    p = config.params
    dom = _domain(model, p, path)
    eps = _eps_list(p, path)
    n_paths = _integer(p, "n_paths", path, minimum=1)
    max_steps = _integer(p, "max_steps", path, minimum=1)
    x0 = None
    if "x0" in p:
        x0 = _field(model, p["x0"], f"{path}.x0")
    qref = None
    if need_quasipotential:
        qref = _quasipotential_ref(model, p, path, dom)
    return ExitProblem(model, dom, dom.center, eps, n_paths, max_steps,
                       qref, seed=config.master_seed, x0=x0)


def _run_exit_scaling(config, out_dir, threads):
    p = config.params
    path = "exit-scaling"
    _no_unknown(p, path, ("radius", "domain_norm", "center", "x0", "eps_list",
                          "n_paths", "max_steps", "eta", "quasipotential",
                          "dump_samples"))
    problem = _exit_problem(config, path)
    eta = _number(p, "eta", path, default=0.25, minimum=0.0, strict_min=True)
    report = exit_scaling(problem, eta, threads)
    written = {"exit_scaling.json": write_json(
        os.path.join(out_dir, "exit_scaling.json"), report)}
    written["exit_scaling.csv"] = export_plotdata(
        report, "exit-scaling", os.path.join(out_dir, "exit_scaling.csv"))
    if _require(p, "dump_samples", path, bool, default=False):
        from .exits import _sample_batch
        from .rng import STREAM_EXIT, derive
        rows = []
        dt = model_grid(config.model).dt
        for i, eps in enumerate(problem.eps_list):
            tau, state, cens = _sample_batch(problem, eps, i, threads)
            for j in range(problem.n_paths):
                seed = derive(problem.seed, STREAM_EXIT,
                              i * problem.n_paths + j)
                rows.append([eps, seed, tau[j] * dt, int(cens[j])]
                            + [state[j, k] for k in
                               range(config.model.basis.n_modes)])
        header = (["eps", "seed", "tau", "censored"]
                  + [f"coeff_{k}" for k in range(config.model.basis.n_modes)])
        written["samples.csv"] = write_csv(
            os.path.join(out_dir, "samples.csv"), header, rows)
    return written


def _run_exit_place(config, out_dir, threads):
    p = config.params
    path = "exit-place"
    _no_unknown(p, path, ("radius", "domain_norm", "center", "x0", "eps_list",
                          "n_paths", "max_steps", "partition"))
    problem = _exit_problem(config, path, need_quasipotential=False)
    cells = _require(p, "partition", path, list)
    partition = []
    for i, cell in enumerate(cells):
        if not isinstance(cell, dict):
            raise SchemaError(f"{path}.partition[{i}]", "must be an object")
        _no_unknown(cell, f"{path}.partition[{i}]",
                    ("name", "axis", "sign", "cos_threshold"))
        partition.append({
            "name": _string(cell, "name", f"{path}.partition[{i}]"),
            "axis": _integer(cell, "axis", f"{path}.partition[{i}]",
                             minimum=0),
            "sign": _number(cell, "sign", f"{path}.partition[{i}]"),
            "cos_threshold": _number(cell, "cos_threshold",
                                     f"{path}.partition[{i}]",
                                     minimum=-1.0, maximum=1.0),
        })
        if partition[-1]["axis"] >= config.model.basis.n_modes:
            raise RangeError(f"{path}.partition[{i}].axis",
                             "beyond the mode count")
    reports = [exit_place_histogram(problem, eps, partition, threads)
               for eps in problem.eps_list]
    report = {"per_eps": reports}
    written = {"exit_place.json": write_json(
        os.path.join(out_dir, "exit_place.json"), report)}
    rows = []
    for rep in reports:
        for name, cell in rep["cells"].items():
            rows.append([rep["eps"], name, cell["count"], cell["freq"],
                         cell["ci"][0], cell["ci"][1]])
    written["exit_place.csv"] = write_csv(
        os.path.join(out_dir, "exit_place.csv"),
        ["eps", "cell", "count", "freq", "ci_lo", "ci_hi"], rows)
    return written


def _run_verify(config, out_dir, threads):
    model = config.model
    p = config.params
    path = "verify"
    _no_unknown(p, path, ("radius", "domain_norm", "center", "probes",
                          "auto_probes", "horizon", "rho"))
    dom = _domain(model, p, path)
    horizon = _number(p, "horizon", path, minimum=0.0, strict_min=True)
    rho = _number(p, "rho", path, minimum=0.0, strict_min=True)
    probes = []
    if "probes" in p:
        for i, coeffs in enumerate(_require(p, "probes", path, list)):
            probes.append(_field(model, coeffs, f"{path}.probes[{i}]"))
    else:
        frac = _number(p, "auto_probes", path, default=0.9, minimum=0.0,
                       maximum=1.0)
        probes.append(dom.center)
        for k in range(model.basis.n_modes):
            for sign in (1.0, -1.0):
                z = dom.center.coeffs.copy()
                z[k] += sign * frac * dom.radius
                probes.append(SpectralField(model.basis, z))
    report = verify_attraction(model, dom, probes, horizon, rho)
    return {"verify.json": write_json(os.path.join(out_dir, "verify.json"),
                                      report)}


_RUNNERS = {
    "simulate": _run_simulate,
    "skeleton": _run_skeleton,
    "action": _run_action,
    "quasipotential": _run_quasipotential,
    "ldp-lower": _run_ldp_lower,
    "ldp-upper": _run_ldp_upper,
    "sweep": _run_sweep,
    "exit-scaling": _run_exit_scaling,
    "exit-place": _run_exit_place,
    "verify": _run_verify,
}


def run(config: ExperimentConfig, threads: int = 1) -> RunManifest:
    """Execute the config's command; manifest is written last."""
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    written = _RUNNERS[config.command](config, out_dir, threads)
    return finalize_run(config, out_dir, written)
