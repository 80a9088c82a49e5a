"""Exit-time and exit-place experiments for small-noise dynamics.

Samples the first time paths leave a norm ball around a stable
equilibrium, checks the basin-of-attraction surrogates at runtime, and
compares the epsilon log of mean exit times against the quasipotential of
the boundary.  Horizons extend in fixed blocks with a continuing RNG
stream, so samples are reproducible; tau is the first grid node outside
the domain (no sub-step interpolation) and the overshoot is reported so
users can tighten the step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import QuasipotentialResult
from .bases import SpectralField
from .errors import BlowUp, BudgetExceeded
from .ldp import wilson_interval
from .models import ModelSpec, diffusion_apply, drift_apply
from .simulate import diag_arrays, step_arrays
from .skeleton import model_grid, solve_skeleton
from . import kernels
from .parallel import run_chunked
from .rng import STREAM_EXIT, generator, path_seeds

_STEP_BUDGET = 1e9


@dataclass(frozen=True)
class ExitDomain:
    """Norm ball D = {x : |x - center| < radius} in the l2 or sup norm."""

    center: SpectralField
    radius: float
    norm: str = "l2"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.norm not in ("l2", "sup"):
            raise ValueError("norm must be l2 or sup")

    def distance(self, model: ModelSpec, coeffs: np.ndarray) -> float:
        d = coeffs - self.center.coeffs
        if self.norm == "l2":
            return float(np.linalg.norm(d))
        return model.state_norm_of(d)

    def contains(self, model: ModelSpec, coeffs: np.ndarray) -> bool:
        return self.distance(model, coeffs) < self.radius


@dataclass(frozen=True, eq=False)
class ExitProblem:
    """Exit experiment description; the model must be time-homogeneous."""

    model: ModelSpec
    domain: ExitDomain
    equilibrium: SpectralField
    eps_list: tuple
    n_paths: int
    max_steps: int
    quasipotential_ref: QuasipotentialResult | None = None
    seed: int = 0
    x0: SpectralField | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if any(e <= 0 for e in eps):
            raise ValueError("exit sampling needs eps > 0")
        object.__setattr__(self, "eps_list", eps)
        if self.max_steps < 1 or self.n_paths < 1:
            raise ValueError("max_steps and n_paths must be >= 1")
        if not self.domain.contains(self.model, self.equilibrium.coeffs):
            raise ValueError("equilibrium must lie inside the domain")

    @property
    def start(self) -> SpectralField:
        return self.x0 if self.x0 is not None else self.equilibrium

    def kernel_eligible(self) -> bool:
        return (self.model.is_diagonal_linear
                and self.domain.norm == "l2"
                and not self.domain.center.coeffs.any())


@dataclass(frozen=True, eq=False)
class ExitSample:
    tau: float
    exit_point: SpectralField
    censored: bool
    steps: int


# -- attraction checks -------------------------------------------------------

def verify_attraction(model: ModelSpec, domain: ExitDomain, probes,
                      horizon: float, rho: float):
    """Noiseless-flow basin checks on a probe grid.

    For each start the deterministic flow must stay inside the domain and
    land within rho of the equilibrium at the horizon.  Violations are
    findings, not faults.
    """
    dt = model.t_end / model.n_steps
    grid_model = ModelSpec(model.basis, model.drift, model.noise,
                           t_end=horizon, n_steps=max(1, round(horizon / dt)),
                           state_norm=model.state_norm,
                           grid_points=model.grid_points)
    center = domain.center
    eq_residual = float(np.linalg.norm(
        -model.basis.eigenvalues * center.coeffs
        + drift_apply(model.drift, center, model.dealias_grid).coeffs))
    findings = []
    for i, x0 in enumerate(probes):
        traj = solve_skeleton(grid_model, x0)
        inside = [domain.contains(model, row) for row in traj.coeffs]
        end_dist = float(np.linalg.norm(traj.coeffs[-1] - center.coeffs))
        violations = []
        if not all(inside):
            first = inside.index(False)
            violations.append(f"left domain at node {first}")
        if end_dist >= rho:
            violations.append(f"|X0({horizon:g}) - O| = {end_dist:.3g} >= rho")
        findings.append({
            "probe": i,
            "x0": tuple(x0.coeffs),
            "stayed_inside": all(inside),
            "terminal_distance": end_dist,
            "violations": violations,
        })
    return {
        "equilibrium_residual": eq_residual,
        "rho": rho,
        "horizon": horizon,
        "probes": findings,
        "passed": all(not f["violations"] for f in findings),
    }


# -- sampling -----------------------------------------------------------------

def _sample_exits_general(problem: ExitProblem, eps: float,
                          seeds) -> tuple:
    """Blockwise general stepper for models outside the kernel contract."""
    model = problem.model
    grid = model_grid(model)
    dt = grid.dt
    a, sqn = step_arrays(model, dt)
    sqrt_eps = np.sqrt(eps)
    trunc = model.noise.n_noise_modes
    additive = model.noise.is_additive
    gains = model.noise_gains()
    basis = model.basis
    n = len(seeds)
    tau = np.full(n, problem.max_steps, dtype=np.int64)
    state = np.tile(problem.start.coeffs, (n, 1))
    censored = np.ones(n, dtype=bool)
    guard = model.blowup_factor * (np.linalg.norm(problem.start.coeffs) + 1.0)
    for i, seed in enumerate(seeds):
        gen = generator(int(seed))
        x = problem.start.coeffs.copy()
        for step in range(problem.max_steps):
            xi = gen.standard_normal(trunc)
            det = x
            if model.drift.kind != "none":
                det = det + dt * drift_apply(model.drift,
                                             SpectralField(basis, x),
                                             model.dealias_grid).coeffs
            if additive:
                d = gains * np.pad(xi, (0, basis.n_modes - trunc))
            else:
                d = diffusion_apply(model.noise, SpectralField(basis, x),
                                    xi).coeffs
            x = a * det + sqrt_eps * (sqn * d)
            if np.linalg.norm(x) > guard:
                raise BlowUp("exit sampling exceeded the norm guard")
            if not problem.domain.contains(model, x):
                tau[i] = step + 1
                censored[i] = False
                break
        state[i] = x
    return tau, state, censored


def sample_exit(problem: ExitProblem, eps: float, seed: int) -> ExitSample:
    """One exit sample with automatic horizon extension until max_steps.

    eps = 0 runs the attracted deterministic flow and always censors.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    seeds = np.array([seed], dtype=np.uint64)
    if problem.kernel_eligible():
        a, sc = diag_arrays(problem.model, eps, model_grid(problem.model).dt,
                            problem.model.noise.n_noise_modes)
        tau, state, cens = kernels.exit_paths(
            a, sc, problem.start.coeffs, problem.domain.radius,
            problem.max_steps, seeds)
    else:
        tau, state, cens = _sample_exits_general(problem, eps, seeds)
    dt = model_grid(problem.model).dt
    return ExitSample(float(tau[0] * dt),
                      SpectralField(problem.model.basis, state[0]),
                      bool(cens[0]), int(tau[0]))


def _sample_batch(problem: ExitProblem, eps: float, eps_idx: int,
                  threads: int = 1):
    model = problem.model
    dt = model_grid(model).dt

    def chunk(lo, hi):
        seeds = path_seeds(problem.seed, STREAM_EXIT,
                           eps_idx * problem.n_paths + lo,
                           eps_idx * problem.n_paths + hi)
        if problem.kernel_eligible():
            a, sc = diag_arrays(model, eps, dt, model.noise.n_noise_modes)
            return kernels.exit_paths(a, sc, problem.start.coeffs,
                                      problem.domain.radius,
                                      problem.max_steps, seeds)
        return _sample_exits_general(problem, eps, seeds)

    parts = run_chunked(chunk, problem.n_paths, threads)
    tau = np.concatenate([p[0] for p in parts])
    state = np.concatenate([p[1] for p in parts])
    cens = np.concatenate([p[2] for p in parts])
    return tau, state, cens


# -- scaling ------------------------------------------------------------------

def predict_steps(problem: ExitProblem) -> float:
    """Predicted total step count n_paths * e^{V/eps} / dt over the grid."""
    v = problem.quasipotential_ref.value if problem.quasipotential_ref else 1.0
    dt = model_grid(problem.model).dt
    return float(sum(problem.n_paths * np.exp(v / e) / dt
                     for e in problem.eps_list))


def exit_scaling(problem: ExitProblem, eta: float = 0.25,
                 threads: int = 1) -> dict:
    """Mean exit times against the quasipotential of the boundary.

    Per eps: mean tau with CI (uncensored mean flagged when censoring
    occurred, plus the all-paths lower bound), eps log mean, the window
    probability of Thm-style concentration, and a linear-in-eps
    extrapolation of eps log mean compared against V(dD).
    """
    if problem.quasipotential_ref is None:
        raise ValueError("exit_scaling needs a quasipotential reference")
    v_ref = problem.quasipotential_ref.value
    if v_ref <= 0:
        raise ValueError("V(dD) must be positive (is the equilibrium "
                         "strictly inside the domain?)")
    predicted = predict_steps(problem)
    if predicted > _STEP_BUDGET:
        raise BudgetExceeded(
            f"predicted {predicted:.3g} steps exceeds the {_STEP_BUDGET:.0g} "
            "budget; raise eps or the time step")
    dt = model_grid(problem.model).dt
    rows = []
    excluded = []
    for i, eps in enumerate(problem.eps_list):
        tau_steps, state, cens = _sample_batch(problem, eps, i, threads)
        tau = tau_steps * dt
        unc = tau[~cens]
        n_cens = int(np.sum(cens))
        if len(unc) == 0:
            excluded.append(eps)
            continue
        mean = float(np.mean(unc))
        se = float(np.std(unc, ddof=1) / np.sqrt(len(unc))) if len(unc) > 1 else np.nan
        mean_lower = float(np.mean(tau))  # censored kept at censoring time
        lo_w = np.exp((v_ref - eta) / eps)
        hi_w = np.exp((v_ref + eta) / eps)
        in_window = int(np.sum((unc >= lo_w) & (unc <= hi_w)))
        wp, wlo, whi = wilson_interval(in_window, len(unc))
        overshoot = float(np.mean(
            [problem.domain.distance(problem.model, s) - problem.domain.radius
             for s, c in zip(state, cens) if not c]))
        rows.append({
            "eps": eps,
            "n": problem.n_paths,
            "n_censored": n_cens,
            "mean_tau": mean,
            "mean_tau_se": se,
            "mean_tau_lower_bound": mean_lower,
            "median_tau": float(np.median(unc)),
            "eps_log_mean": float(eps * np.log(mean)),
            "window_prob": wp,
            "window_ci": (wlo, whi),
            "mean_overshoot": overshoot,
            "censoring_flagged": n_cens > 0,
        })
    if not rows:
        raise BudgetExceeded("all eps fully censored; raise max_steps")
    x = np.array([r["eps"] for r in rows])
    y = np.array([r["eps_log_mean"] for r in rows])
    if len(rows) >= 2:
        coef = np.polyfit(x, y, 1)
        limit = float(coef[1])
    else:
        limit = float(y[0])
    return {
        "rows": rows,
        "excluded_eps": excluded,
        "v_ref": v_ref,
        "eta": eta,
        "extrapolated_limit": limit,
        "limit_gap": abs(limit - v_ref),
        "predicted_steps": predicted,
    }


# -- exit place ---------------------------------------------------------------

def exit_place_histogram(problem: ExitProblem, eps: float, partition,
                         threads: int = 1) -> dict:
    """Empirical exit-location distribution over boundary cells.

    Cells are directional caps {sign * v[axis] / |v| >= cos_threshold} on
    the centered exit vector; unmatched exits fall into "other", so the
    partition always covers the boundary.  First matching cell wins.
    """
    idx = problem.eps_list.index(eps) if eps in problem.eps_list else 0
    tau, state, cens = _sample_batch(problem, eps, idx, threads)
    counts = {cell["name"]: 0 for cell in partition}
    counts["other"] = 0
    n_eff = 0
    for s, c in zip(state, cens):
        if c:
            continue
        n_eff += 1
        v = s - problem.domain.center.coeffs
        size = np.linalg.norm(v)
        for cell in partition:
            if size == 0:
                break
            if cell["sign"] * v[cell["axis"]] / size >= cell["cos_threshold"]:
                counts[cell["name"]] += 1
                break
        else:
            counts["other"] += 1
    out = {}
    for name, k in counts.items():
        if n_eff:
            p, lo, hi = wilson_interval(k, n_eff)
        else:
            p, lo, hi = np.nan, np.nan, np.nan
        out[name] = {"count": k, "freq": p, "ci": (lo, hi)}
    return {"eps": eps, "n_exits": n_eff, "cells": out,
            "n_censored": int(np.sum(cens))}


# -- inner-regularity surrogate ----------------------------------------------

def inner_regularity_trend(model: ModelSpec, domain: ExitDomain, rhos,
                           horizons, control_dt: float | None = None) -> list:
    """V from rho-shifted starts to the boundary, reported as a trend only.

    The regularity assumptions on V are not certifiable numerically; this
    reports V(shifted start, dD) for a small rho grid so the user can see
    whether it approaches V(O, dD).
    """
    from .action import TargetBall, quasipotential
    out = []
    for rho in sorted(rhos, reverse=True):
        z = domain.center.coeffs.copy()
        z[0] += rho
        start = SpectralField(model.basis, z)
        res = quasipotential(model, start,
                             TargetBall(domain.center, domain.radius),
                             horizons, control_dt=control_dt)
        out.append({"rho": float(rho), "value": res.value})
    return out
