import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from fwspde import (
    ControlPath,
    DriftSpec,
    ModelSpec,
    NoiseSpec,
    SolverOptions,
    SpectralBasis,
    SpectralField,
    TimeGrid,
    Trajectory,
    apply_M,
    cutoff,
    mild_residual,
    solve_skeleton,
)
from fwspde.errors import PicardDiverged
from fwspde.skeleton import default_options, model_grid, semigroup_rows

from conftest import random_field


# -- cutoff --------------------------------------------------------------------

def test_cutoff_inside_ball_unchanged():
    b = SpectralBasis.dirichlet_interval(3)
    f = SpectralField(b, np.array([1.0, 0.5, 0.0]))
    out = cutoff(f, 2.0 * f.l2())
    assert np.array_equal(out.coeffs, f.coeffs)


def test_cutoff_radial_scaling():
    b = SpectralBasis.dirichlet_interval(1)
    f = SpectralField(b, np.array([10.0]))
    assert abs(cutoff(f, 5.0).coeffs[0] - 5.0) < 1e-14


def test_cutoff_lipschitz_three():
    rng = np.random.default_rng(23)
    b = SpectralBasis.dirichlet_interval(6)
    for _ in range(200):
        x = random_field(b, rng, rng.uniform(0.2, 3.0))
        y = random_field(b, rng, rng.uniform(0.2, 3.0))
        r = rng.uniform(0.1, 2.0)
        dx = np.linalg.norm(cutoff(x, r).coeffs - cutoff(y, r).coeffs)
        assert dx <= 3.0 * np.linalg.norm(x.coeffs - y.coeffs) + 1e-12


# -- apply_M ---------------------------------------------------------------------

def _traj_const(basis, grid, coeffs):
    return Trajectory(basis, grid, np.tile(coeffs, (grid.n_steps + 1, 1)))


def test_apply_m_no_drift_is_identity():
    b = SpectralBasis.dirichlet_interval(2)
    grid = TimeGrid(1.0, 50)
    rng = np.random.default_rng(1)
    psi = Trajectory(b, grid, rng.normal(size=(51, 2)))
    out = apply_M(psi, DriftSpec("none"), SolverOptions(cutoff_radius=10.0))
    assert out is psi


def test_apply_m_zero_fixed_point():
    b = SpectralBasis.dirichlet_interval(4, np.pi)
    grid = TimeGrid(0.5, 100)
    psi = _traj_const(b, grid, np.zeros(4))
    drift = DriftSpec("reaction_polynomial", (0.0, 1.0, 0.0, -1.0))
    out = apply_M(psi, drift, SolverOptions(cutoff_radius=5.0))
    assert np.max(np.abs(out.coeffs)) < 1e-12


def test_apply_m_scalar_surrogate_oracle():
    """Single retained mode reduces to a scalar ODE; endpoint vs solve_ivp.

    With one sine mode, the projected cubic drift is c' = -c - i4 (c+1)^3
    for the constant forcing path with coefficient 1, where i4 is the
    fourth-moment integral of the basis function (computed here by
    independent quadrature).
    """
    L = np.pi
    b = SpectralBasis.dirichlet_interval(1, L)
    i4 = quad(lambda x: (np.sqrt(2.0 / L) * np.sin(np.pi * x / L)) ** 4,
              0, L)[0]
    t_end = 0.5

    def rhs(t, v):
        return [-v[0] - i4 * (v[0] + 1.0) ** 3]

    sol = solve_ivp(rhs, (0.0, t_end), [0.0], rtol=1e-11, atol=1e-12,
                    dense_output=True)
    oracle = sol.y[0, -1] + 1.0  # M(psi) = v + psi

    drift = DriftSpec("reaction_polynomial", (0.0, 0.0, 0.0, -1.0))
    endpoints = []
    for n_steps in (400, 800, 1600):
        grid = TimeGrid(t_end, n_steps)
        psi = _traj_const(b, grid, np.array([1.0]))
        out = apply_M(psi, drift, SolverOptions(cutoff_radius=8.0,
                                                subinterval_len=0.1))
        endpoints.append(out.coeffs[-1, 0])
    errs = [abs(e - oracle) for e in endpoints]
    assert errs[2] < 2e-3
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


def test_apply_m_lipschitz_stable_under_refinement():
    b = SpectralBasis.dirichlet_interval(4, np.pi)
    drift = DriftSpec("reaction_polynomial", (0.0, 1.0, 0.0, -1.0))
    rng = np.random.default_rng(3)
    ratios = []
    for n_steps in (100, 200):
        grid = TimeGrid(0.5, n_steps)
        worst = 0.0
        rng = np.random.default_rng(3)
        for _ in range(10):
            p1 = rng.normal(size=4) * 0.5
            p2 = rng.normal(size=4) * 0.5
            t1 = _traj_const(b, grid, p1)
            t2 = _traj_const(b, grid, p2)
            opts = SolverOptions(cutoff_radius=6.0, subinterval_len=0.1)
            m1 = apply_M(t1, drift, opts)
            m2 = apply_M(t2, drift, opts)
            num = np.max(np.linalg.norm(m1.coeffs - m2.coeffs, axis=1))
            den = np.max(np.linalg.norm(t1.coeffs - t2.coeffs, axis=1))
            worst = max(worst, num / den)
        ratios.append(worst)
    assert np.isfinite(ratios).all()
    assert ratios[1] < 1.5 * ratios[0] + 1e-9


def test_apply_m_growth_monotone_under_scaling():
    b = SpectralBasis.dirichlet_interval(3, np.pi)
    drift = DriftSpec("reaction_polynomial", (0.0, 0.5, 0.0, -1.0))
    grid = TimeGrid(0.5, 100)
    base = np.array([0.4, -0.2, 0.1])
    sups = []
    for c in (1.0, 1.5, 2.0):
        psi = _traj_const(b, grid, c * base)
        out = apply_M(psi, drift, SolverOptions(cutoff_radius=20.0,
                                                subinterval_len=0.05))
        sups.append(np.max(np.linalg.norm(out.coeffs, axis=1)))
    assert sups[0] <= sups[1] + 1e-9 <= sups[2] + 2e-9


def test_picard_divergence_signalled():
    # absurdly long subinterval with a stiff cubic must fail to contract
    b = SpectralBasis.dirichlet_interval(1, np.pi)
    drift = DriftSpec("reaction_polynomial", (0.0, 0.0, 0.0, -40.0))
    grid = TimeGrid(4.0, 40)
    psi = _traj_const(b, grid, np.array([3.0]))
    with pytest.raises(PicardDiverged):
        apply_M(psi, drift, SolverOptions(cutoff_radius=300.0,
                                          subinterval_len=4.0,
                                          max_picard_iters=60))


# -- solve_skeleton ---------------------------------------------------------------

def test_zero_control_is_free_flow(ou_model):
    x0 = SpectralField(ou_model.basis, np.array([0.8]))
    traj = solve_skeleton(ou_model, x0)
    grid = model_grid(ou_model)
    expect = semigroup_rows(ou_model, x0, grid)
    assert np.max(np.abs(traj.coeffs - expect)) < 1e-14


def test_linear_constant_control_closed_form(ou_model):
    model = ModelSpec(ou_model.basis, ou_model.drift, ou_model.noise,
                      t_end=1.0, n_steps=4000, state_norm="l2")
    x0 = SpectralField(model.basis, np.array([0.5]))
    grid = model_grid(model)
    u = ControlPath.constant(grid, [0.7])
    traj = solve_skeleton(model, x0, u)
    t = grid.nodes
    exact = np.exp(-t) * 0.5 + 0.7 * (1.0 - np.exp(-t))
    assert np.max(np.abs(traj.coeffs[:, 0] - exact)) < 5e-4
    assert mild_residual(traj, model, u) < 1e-12


def test_skeleton_grid_convergence(reaction_model):
    rng = np.random.default_rng(8)
    x0 = random_field(reaction_model.basis, rng, 0.3)
    ends = []
    for n_steps in (125, 250, 500):
        model = ModelSpec(reaction_model.basis, reaction_model.drift,
                          reaction_model.noise, t_end=0.5, n_steps=n_steps)
        grid = model_grid(model)
        u = ControlPath(grid, 0.4 * np.sin(np.pi * grid.nodes)[:, None]
                        * np.ones((1, 16)))
        traj = solve_skeleton(model, x0, u)
        assert mild_residual(traj, model, u) < 1e-10
        ends.append(traj.coeffs[-1].copy())
    d1 = np.linalg.norm(ends[1] - ends[0])
    d2 = np.linalg.norm(ends[2] - ends[1])
    assert d1 / d2 >= 1.8


def test_ns_energy_nonincreasing(ns_model):
    rng = np.random.default_rng(4)
    for _ in range(5):
        x0 = random_field(ns_model.basis, rng, 0.5)
        traj = solve_skeleton(ns_model, x0)
        l2 = traj.node_l2()
        assert np.all(np.diff(l2) <= 1e-10)


def test_default_options_reasonable(ou_model):
    x0 = SpectralField(ou_model.basis, np.array([1.0]))
    opts = default_options(ou_model, x0)
    assert opts.cutoff_radius >= 4.0 * (1.0 + 1.0)
    assert 0 < opts.subinterval_len <= ou_model.t_end


# -- mild_residual -----------------------------------------------------------------

def test_residual_of_exact_linear_path(ou_model):
    x0 = SpectralField(ou_model.basis, np.array([1.0]))
    traj = solve_skeleton(ou_model, x0)
    assert mild_residual(traj, ou_model) < 1e-10


def test_residual_detects_perturbation(ou_model):
    x0 = SpectralField(ou_model.basis, np.array([1.0]))
    traj = solve_skeleton(ou_model, x0)
    rows = traj.coeffs.copy()
    rows[50, 0] += 0.1
    bad = Trajectory(ou_model.basis, traj.grid, rows)
    assert mild_residual(bad, ou_model) >= 0.05


def test_residual_on_controlled_reaction(reaction_model):
    rng = np.random.default_rng(10)
    x0 = random_field(reaction_model.basis, rng, 0.2)
    grid = model_grid(reaction_model)
    u = ControlPath(grid, 0.3 * np.cos(grid.nodes)[:, None] * np.ones((1, 16)))
    traj = solve_skeleton(reaction_model, x0, u)
    assert mild_residual(traj, reaction_model, u) <= 1e-10
