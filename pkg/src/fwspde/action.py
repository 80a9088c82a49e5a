"""Rate functional, minimum-action optimization, and the quasipotential.

The action of a control is half its squared L2-in-time H-norm; the rate of
a path is the least action over controls steering the skeleton onto it.
Minimization runs on the discretized control with a quadratic endpoint
penalty (weight doubled until the terminal ball is hit) and descends with
L-BFGS.  Gradients come from the discrete adjoint of the exponential-Euler
recursion, which is exact to quadrature for polynomial reaction drifts;
Navier-Stokes falls back to finite differences.

Discrete action values are certified upper bounds for the discretized
problem; closeness to the continuum is controlled empirically by grid
refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.fft import dst
from scipy.optimize import minimize as _scipy_minimize

from .bases import DIRICHLET, SpectralField
from .errors import NotConverged
from .models import ModelSpec, diffusion_rows, drift_rows
from .paths import ControlPath, TimeGrid, Trajectory, trapezoid_energy


def action_of_control(u: ControlPath) -> float:
    """(1/2) integral of |u(t)|_H^2, trapezoid quadrature on u's grid."""
    return u.energy


@dataclass(frozen=True)
class TargetPoint:
    """Terminal target y with acceptance ball radius tol (H-norm)."""

    y: SpectralField
    tol: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("target tol must be positive")


@dataclass(frozen=True)
class TargetBall:
    """Boundary target: sphere of the given radius around a center.

    Approximated by the finite candidate set center +- radius e_k, as an
    upper-bound sampling of the infimum over the boundary.
    """

    center: SpectralField
    radius: float
    tol: float = 1e-3

    def candidates(self):
        c = self.center.coeffs
        basis = self.center.basis
        out = []
        for k in range(basis.n_modes):
            for sign in (1.0, -1.0):
                z = c.copy()
                z[k] += sign * self.radius
                out.append(SpectralField(basis, z))
        return out


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 500
    grad_tol: float = 1e-9
    penalty_rounds: int = 14
    action_ceiling: float = 1e6
    tracking_weight: float = 0.0   # > 0 adds the path-tracking penalty
    tracking_tol: float = 1e-2


@dataclass(frozen=True)
class ActionProblem:
    model: ModelSpec
    x0: SpectralField
    target: TargetPoint
    horizon: float
    control_grid: TimeGrid | None = None
    penalty_weight: float = 10.0
    optimizer: OptimizerOptions = OptimizerOptions()

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be positive")

    @property
    def state_grid(self) -> TimeGrid:
        dt = self.model.t_end / self.model.n_steps
        return TimeGrid(self.horizon, max(1, round(self.horizon / dt)))


@dataclass(frozen=True, eq=False)
class ActionResult:
    action: float
    control: ControlPath
    terminal_state: SpectralField
    terminal_gap: float
    converged: bool
    iterations: int
    penalty_weight: float
    unreachable: bool = False
    tracking_gap: float = 0.0


@dataclass(frozen=True)
class QuasipotentialResult:
    value: float
    best_horizon: float
    per_horizon: tuple  # ((T, action), ...)
    monotone_flag: bool
    candidate_values: tuple = ()


# -- forward / adjoint ------------------------------------------------------

def _interval_transforms(model: ModelSpec):
    basis = model.basis
    n = model.dealias_grid
    L = basis.domain_length
    scale = np.sqrt(2.0 / L)
    h = L / (n + 1)

    def synth(rows):
        pad = np.zeros(rows.shape[:-1] + (n,))
        pad[..., :basis.n_modes] = rows
        return scale * dst(pad, type=1, axis=-1) / 2.0

    def project(vals):
        full = scale * h * dst(vals, type=1, axis=-1) / 2.0
        return full[..., :basis.n_modes]

    return synth, project


def _g_and_deriv(model: ModelSpec, grid_vals):
    """Pointwise g and g' at scalar grid values (interval models)."""
    noise = model.noise
    c = noise.g_params[0]
    if noise.is_additive:
        return np.full_like(grid_vals, c), np.zeros_like(grid_vals)
    denom = 1.0 + grid_vals ** 2
    return c / denom, -2.0 * c * grid_vals / denom ** 2


def forward_march(model: ModelSpec, x0_coeffs: np.ndarray,
                  u_state: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Exact discrete skeleton: X_{n+1} = S(dt)(X_n + dt B + dt G u_n)."""
    basis = model.basis
    a = np.exp(-basis.eigenvalues * grid.dt)
    rows = np.empty((grid.n_steps + 1, basis.n_modes))
    x = np.array(x0_coeffs, dtype=float)
    rows[0] = x
    for n in range(grid.n_steps):
        f = drift_rows(model.drift, basis, x[None, :], model.dealias_grid)[0]
        g = diffusion_rows(model.noise, basis, x[None, :],
                           u_state[n][None, :], model.dealias_grid)[0]
        x = a * (x + grid.dt * (f + g))
        rows[n + 1] = x
    return rows


def _adjoint_gradient(model: ModelSpec, rows: np.ndarray, u_state: np.ndarray,
                      grid: TimeGrid, lam_terminal: np.ndarray,
                      tracking_sources: np.ndarray | None) -> np.ndarray:
    """Gradient of the penalty terms with respect to the state-grid control.

    ``lam_terminal`` seeds the costate at T; ``tracking_sources[n]`` (if
    given) adds the per-node derivative of the tracking penalty.  Exact for
    none / reaction_polynomial drifts (Nemytskii Jacobians are symmetric in
    an orthonormal basis with exact quadrature).
    """
    basis = model.basis
    noise = model.noise
    a = np.exp(-basis.eigenvalues * grid.dt)
    n_noise = noise.n_noise_modes
    lam = np.asarray(noise.q_eigenvalues)
    grad = np.zeros_like(u_state)
    interval = basis.kind == DIRICHLET
    if interval:
        synth, project = _interval_transforms(model)
    poly_d = (model.drift.poly_derivative()
              if model.drift.kind == "reaction_polynomial" else None)
    costate = lam_terminal.copy()
    if tracking_sources is not None:
        costate = costate + tracking_sources[grid.n_steps]
    for n in range(grid.n_steps - 1, -1, -1):
        c = a * costate
        x = rows[n]
        if noise.is_additive:
            grad[n] = grid.dt * noise.g_params[0] * lam * c[:n_noise]
            jgu = 0.0
        else:
            xv = synth(x)
            gv, gdv = _g_and_deriv(model, xv)
            cv = synth(c)
            grad[n] = grid.dt * lam * project(gv * cv)[:n_noise]
            qv = synth(np.concatenate([lam * u_state[n],
                                       np.zeros(basis.n_modes - n_noise)]))
            jgu = grid.dt * project(gdv * qv * cv)
        if poly_d is not None:
            xv = synth(x) if noise.is_additive else xv
            bd = np.polynomial.polynomial.polyval(xv, poly_d)
            jb = grid.dt * project(bd * synth(c))
        else:
            jb = 0.0
        costate = c + jb + jgu
        if tracking_sources is not None:
            costate = costate + tracking_sources[n]
    return grad


def _interp_matrix(ctrl_grid: TimeGrid, state_grid: TimeGrid):
    """Linear interpolation weights from control nodes onto state nodes."""
    if (ctrl_grid.n_steps == state_grid.n_steps
            and ctrl_grid.t_end == state_grid.t_end):
        return None
    t = state_grid.nodes
    tc = ctrl_grid.nodes
    idx = np.clip(np.searchsorted(tc, t, side="right") - 1, 0,
                  ctrl_grid.n_steps - 1)
    frac = (t - tc[idx]) / ctrl_grid.dt
    return idx, np.clip(frac, 0.0, 1.0)


def _apply_interp(interp, u_ctrl):
    if interp is None:
        return u_ctrl
    idx, frac = interp
    return (1.0 - frac)[:, None] * u_ctrl[idx] + frac[:, None] * u_ctrl[idx + 1]


def _apply_interp_t(interp, grad_state, n_ctrl_nodes):
    if interp is None:
        return grad_state
    idx, frac = interp
    out = np.zeros((n_ctrl_nodes, grad_state.shape[1]))
    np.add.at(out, idx, (1.0 - frac)[:, None] * grad_state)
    np.add.at(out, idx + 1, frac[:, None] * grad_state)
    return out


def _fd_gradient(fun, u_flat, h=1e-6):
    g = np.empty_like(u_flat)
    for i in range(len(u_flat)):
        up = u_flat.copy()
        up[i] += h
        dn = u_flat.copy()
        dn[i] -= h
        g[i] = (fun(up) - fun(dn)) / (2.0 * h)
    return g


def minimize_action(problem: ActionProblem,
                    tracking: Trajectory | None = None,
                    u_start: ControlPath | None = None) -> ActionResult:
    """Penalized descent for the least-action control reaching the target.

    The endpoint constraint is enforced by quadratic-penalty continuation;
    the returned action is an upper bound on the discrete rate, tight to
    within the reported terminal gap.
    """
    model = problem.model
    grid_s = problem.state_grid
    grid_c = problem.control_grid or grid_s
    opts = problem.optimizer
    n_noise = model.noise.n_noise_modes
    y = problem.target.y.coeffs
    interp = _interp_matrix(grid_c, grid_s)
    w_ctrl = grid_c.trapezoid_weights()
    exact_adjoint = model.drift.kind in ("none", "reaction_polynomial")
    track_rows = tracking.coeffs if tracking is not None else None
    w_track = opts.tracking_weight if tracking is not None else 0.0
    tw = grid_s.trapezoid_weights()

    state = {}

    def objective(u_flat, w_pen):
        u_ctrl = u_flat.reshape(grid_c.n_steps + 1, n_noise)
        u_state = _apply_interp(interp, u_ctrl)
        rows = forward_march(model, problem.x0.coeffs, u_state, grid_s)
        gap_vec = rows[-1] - y
        energy = float(0.5 * np.sum(w_ctrl[:, None] * u_ctrl ** 2))
        j = energy + 0.5 * w_pen * float(np.sum(gap_vec ** 2))
        sources = None
        if w_track > 0.0:
            dev = rows - track_rows
            j += 0.5 * w_track * float(np.sum(tw[:, None] * dev ** 2))
            sources = w_track * tw[:, None] * dev
        state["rows"] = rows
        state["gap"] = float(np.linalg.norm(gap_vec))
        if not exact_adjoint:
            return j, None
        grad_state = _adjoint_gradient(model, rows, u_state, grid_s,
                                       w_pen * gap_vec, sources)
        grad_ctrl = w_ctrl[:, None] * u_ctrl + _apply_interp_t(
            interp, grad_state, grid_c.n_steps + 1)
        return j, grad_ctrl.ravel()

    if u_start is not None:
        u_flat = u_start.resample(grid_c).values.ravel().copy()
    else:
        u_flat = np.zeros((grid_c.n_steps + 1) * n_noise)
    w_pen = problem.penalty_weight
    total_iters = 0
    gap_hist = []
    unreachable = False
    for _round in range(opts.penalty_rounds):
        if exact_adjoint:
            res = _scipy_minimize(lambda v: objective(v, w_pen), u_flat,
                                  jac=True, method="L-BFGS-B",
                                  options={"maxiter": opts.max_iters,
                                           "gtol": opts.grad_tol,
                                           "ftol": 1e-14})
        else:
            fun = lambda v: objective(v, w_pen)[0]
            res = _scipy_minimize(fun, u_flat,
                                  jac=lambda v: _fd_gradient(fun, v),
                                  method="L-BFGS-B",
                                  options={"maxiter": opts.max_iters,
                                           "gtol": opts.grad_tol,
                                           "ftol": 1e-14})
        u_flat = res.x
        total_iters += int(res.nit)
        objective(u_flat, w_pen)  # refresh state at the solution
        gap = state["gap"]
        gap_hist.append(gap)
        if gap <= problem.target.tol:
            break
        action_now = trapezoid_energy(
            grid_c, u_flat.reshape(grid_c.n_steps + 1, n_noise))
        # penalty doubling shrinks the gap of any reachable target; a gap
        # that stops responding (or blows past the action ceiling) marks
        # the degenerate-noise unreachable case
        stagnant = (len(gap_hist) >= 3
                    and gap_hist[-1] > 0.98 * gap_hist[-2]
                    and gap_hist[-2] > 0.98 * gap_hist[-3])
        if stagnant and (action_now > opts.action_ceiling
                         or action_now < 1e-12 * max(1.0, gap)
                         or len(gap_hist) >= 5):
            unreachable = True
            break
        w_pen *= 2.0

    u_ctrl = u_flat.reshape(grid_c.n_steps + 1, n_noise)
    control = ControlPath(grid_c, u_ctrl)
    rows = state["rows"]
    gap = state["gap"]
    tracking_gap = 0.0
    if tracking is not None:
        tracking_gap = float(np.max(np.linalg.norm(rows - track_rows, axis=1)))
    return ActionResult(
        action=action_of_control(control),
        control=control,
        terminal_state=SpectralField(model.basis, rows[-1]),
        terminal_gap=gap,
        converged=(gap <= problem.target.tol) and not unreachable,
        iterations=total_iters,
        penalty_weight=w_pen,
        unreachable=unreachable,
        tracking_gap=tracking_gap,
    )


def lq_reach_control(model: ModelSpec, grid: TimeGrid, x0: SpectralField,
                     y: SpectralField) -> ControlPath:
    """Least-norm control reaching y at the horizon, diagonal linear models.

    Closed-form normal equations per mode for the discrete recursion; used
    to generate reference paths of a prescribed action.  Target components
    outside the noise range must already be matched by the free flow.
    """
    if not model.is_diagonal_linear:
        raise ValueError("lq_reach_control needs a diagonal linear additive "
                         "model")
    basis = model.basis
    k = model.noise.n_noise_modes
    a = np.exp(-basis.eigenvalues * grid.dt)
    n = grid.n_steps
    gains = model.noise_gains()[:k]
    free_end = np.exp(-basis.eigenvalues * grid.t_end) * x0.coeffs
    delta = y.coeffs - free_end
    dead = np.abs(delta[k:])
    if dead.size and np.max(dead) > 1e-12:
        raise ValueError("target unreachable: components outside the noise "
                         "range differ from the free flow")
    if np.any(gains == 0.0):
        raise ValueError("zero noise gain in a controlled mode")
    w = grid.trapezoid_weights()
    u = np.zeros((n + 1, k))
    steps = np.arange(n)
    for j in range(k):
        c = a[j] ** (n - steps) * grid.dt * gains[j]
        s = np.sum(c * c / w[:-1])
        mu = delta[j] / s
        u[:-1, j] = mu * c / w[:-1]
    return ControlPath(grid, u)


# -- quasipotential ---------------------------------------------------------

def quasipotential(model: ModelSpec, origin: SpectralField, target,
                   horizons, control_dt: float | None = None,
                   penalty_weight: float = 10.0,
                   optimizer: OptimizerOptions = OptimizerOptions(),
                   target_tol: float = 1e-3) -> QuasipotentialResult:
    """Least action over horizons (and boundary candidates, for balls).

    Each horizon is warm-started from the previous optimum, time-rescaled;
    the reported value is the minimum over the sweep and is an upper bound
    for the discretized infimum.
    """
    horizons = sorted(float(t) for t in horizons)
    if not horizons:
        raise ValueError("need at least one horizon")
    if isinstance(target, TargetBall):
        candidates = target.candidates()
        tol = target.tol
    elif isinstance(target, TargetPoint):
        candidates = [target.y]
        tol = target.tol
    else:
        candidates = [target]
        tol = target_tol
    warm = [None] * len(candidates)
    per_horizon = []
    cand_best = [np.inf] * len(candidates)
    failures = 0
    dt = control_dt or model.t_end / model.n_steps
    for t_end in horizons:
        # the action solve owns its discretization: state and control both
        # live on the horizon grid at the requested resolution
        n_steps = max(1, round(t_end / dt))
        h_model = replace(model, t_end=t_end, n_steps=n_steps)
        best = np.inf
        for ci, y in enumerate(candidates):
            problem = ActionProblem(
                h_model, origin, TargetPoint(y, tol), t_end,
                penalty_weight=penalty_weight, optimizer=optimizer)
            res = minimize_action(problem, u_start=warm[ci])
            if res.converged:
                warm[ci] = res.control
                best = min(best, res.action)
                cand_best[ci] = min(cand_best[ci], res.action)
            else:
                failures += 1
        per_horizon.append((t_end, best))
    finite = [(t, v) for t, v in per_horizon if np.isfinite(v)]
    if not finite:
        raise NotConverged("no horizon produced a converged action "
                           f"({failures} failed solves)")
    value = min(v for _, v in finite)
    best_horizon = min(t for t, v in finite if v <= value + 1e-9)
    vals = [v for _, v in finite]
    monotone = all(b <= a + 1e-6 + 1e-3 * abs(a) for a, b in zip(vals, vals[1:]))
    return QuasipotentialResult(value=value, best_horizon=best_horizon,
                                per_horizon=tuple(per_horizon),
                                monotone_flag=monotone,
                                candidate_values=tuple(cand_best))


# -- level sets --------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    flag: str               # member | non_member | unknown
    action_bound: float     # certified upper bound on the candidate's rate
    tracking_gap: float


def level_set_probe(model: ModelSpec, x0: SpectralField, s: float,
                    candidates, slack: float = 1e-2,
                    tracking_weight: float = 50.0,
                    optimizer: OptimizerOptions | None = None):
    """Decide membership of candidate paths in the action level set.

    Each candidate is chased with an endpoint target plus a path-tracking
    penalty; the resulting control energy is a certified upper bound on
    the candidate's rate when the tracked path is close, and membership is
    decided against s + slack.  Decisions are upper-bound based, so a
    ``non_member`` verdict carries the documented slack.
    """
    if s <= 0:
        raise ValueError("level s must be positive")
    opts = optimizer or OptimizerOptions()
    opts = replace(opts, tracking_weight=tracking_weight)
    out = []
    for phi in candidates:
        problem = ActionProblem(model, x0,
                                TargetPoint(phi.terminal, 1e-3),
                                phi.grid.t_end, penalty_weight=10.0,
                                optimizer=opts)
        res = minimize_action(problem, tracking=phi)
        close = res.tracking_gap <= opts.tracking_tol and res.converged
        if res.unreachable:
            out.append(ProbeResult("non_member", np.inf, res.tracking_gap))
        elif close and res.action <= s + slack:
            out.append(ProbeResult("member", res.action, res.tracking_gap))
        elif close:
            out.append(ProbeResult("non_member", res.action, res.tracking_gap))
        else:
            out.append(ProbeResult("unknown", np.inf, res.tracking_gap))
    return out
