import numpy as np
import pytest

from fwspde import (
    BudgetExceeded,
    DriftSpec,
    ModelSpec,
    NoiseSpec,
    SpectralBasis,
    SpectralField,
    exit_place_histogram,
    exit_scaling,
    sample_exit,
    verify_attraction,
)
from fwspde.action import QuasipotentialResult
from fwspde.exits import ExitDomain, ExitProblem, inner_regularity_trend

V_UNIT = QuasipotentialResult(1.0, 8.0, ((8.0, 1.0),), True)


def _ou(n_steps=1000, t_end=1.0):
    basis = SpectralBasis.dirichlet_interval(1, np.pi)
    return ModelSpec(basis, DriftSpec("none"), NoiseSpec((1.0,)),
                     t_end=t_end, n_steps=n_steps, state_norm="l2")


def _problem(model, eps_list, n_paths=100, max_steps=200000, seed=7,
             radius=1.0, qref=V_UNIT):
    dom = ExitDomain(model.basis.zero_field(), radius, "l2")
    return ExitProblem(model, dom, dom.center, tuple(eps_list), n_paths,
                       max_steps, qref, seed=seed)


# -- attraction checks ---------------------------------------------------------

def test_attraction_ou_probe():
    model = _ou()
    dom = ExitDomain(model.basis.zero_field(), 1.0, "l2")
    probes = [SpectralField(model.basis, np.array([v]))
              for v in (0.0, 0.9, -0.9)]
    rep = verify_attraction(model, dom, probes, horizon=3.0, rho=0.1)
    assert rep["passed"]
    assert rep["equilibrium_residual"] < 1e-12
    # 0.9 e^{-3} = 0.0448 < 0.1
    assert abs(rep["probes"][1]["terminal_distance"] - 0.9 * np.exp(-3.0)) < 1e-6


def test_attraction_violation_reported():
    basis = SpectralBasis.dirichlet_interval(1, np.pi)
    # reversed drift: +2x overwhelms the unit decay near the origin and the
    # flow leaves the unit ball toward the outer equilibrium
    model = ModelSpec(basis, DriftSpec("reaction_polynomial",
                                       (0.0, 2.0, 0.0, -1.0)),
                      NoiseSpec((1.0,)), t_end=1.0, n_steps=500,
                      state_norm="l2")
    dom = ExitDomain(basis.zero_field(), 1.0, "l2")
    probes = [SpectralField(basis, np.array([0.9]))]
    rep = verify_attraction(model, dom, probes, horizon=3.0, rho=0.1)
    assert not rep["passed"]
    assert rep["probes"][0]["violations"]


# -- sampling -------------------------------------------------------------------

def test_sample_exit_large_eps_quick():
    model = _ou(n_steps=200)
    problem = _problem(model, (1.5,), max_steps=100000)
    n_done = 0
    for seed in range(300):
        s = sample_exit(problem, 1.5, seed)
        if not s.censored:
            n_done += 1
            assert s.tau > 0.0
            assert np.linalg.norm(s.exit_point.coeffs) >= 1.0
    assert n_done >= 297  # overwhelming majority exits within budget


def test_sample_exit_eps_zero_censored():
    model = _ou(n_steps=100)
    problem = _problem(model, (0.5,), max_steps=500)
    s = sample_exit(problem, 0.0, 3)
    assert s.censored


def test_sample_exit_deterministic():
    model = _ou(n_steps=500)
    problem = _problem(model, (0.5,))
    a = sample_exit(problem, 0.5, 123)
    b = sample_exit(problem, 0.5, 123)
    assert a.tau == b.tau
    assert np.array_equal(a.exit_point.coeffs, b.exit_point.coeffs)


def test_overshoot_shrinks_with_dt():
    overshoots = []
    for n_steps in (250, 500):
        model = _ou(n_steps=n_steps)
        problem = _problem(model, (0.6,), n_paths=400, seed=11)
        rep = exit_scaling(problem, eta=1.0)
        overshoots.append(rep["rows"][0]["mean_overshoot"])
    assert overshoots[1] < overshoots[0]


def test_censoring_consistency():
    model = _ou(n_steps=200)
    means = []
    for max_steps in (2000, 20000):
        problem = _problem(model, (0.35,), n_paths=150, max_steps=max_steps,
                           seed=13)
        rep = exit_scaling(problem, eta=1.0)
        means.append(rep["rows"][0]["mean_tau_lower_bound"])
    assert means[1] >= means[0] - 1e-12


# -- scaling ----------------------------------------------------------------------

def test_exit_scaling_small_grid():
    model = _ou(n_steps=500)
    problem = _problem(model, (0.6, 0.45), n_paths=200, seed=3)
    rep = exit_scaling(problem, eta=1.0)
    assert len(rep["rows"]) == 2
    e1, e2 = rep["rows"]
    assert e1["eps"] == 0.6 and e2["eps"] == 0.45
    # median exit time stochastically nonincreasing in eps (CI-aware slack)
    assert e2["median_tau"] >= e1["median_tau"] * 0.7
    assert rep["v_ref"] == 1.0
    assert np.isfinite(rep["extrapolated_limit"])


def test_exit_scaling_rejects_zero_v():
    model = _ou()
    qref = QuasipotentialResult(0.0, 1.0, ((1.0, 0.0),), True)
    problem = _problem(model, (0.5,), qref=qref)
    with pytest.raises(ValueError):
        exit_scaling(problem)


def test_exit_scaling_budget_guard():
    model = _ou(n_steps=1000)
    problem = _problem(model, (0.05,), n_paths=100000, max_steps=10**9)
    with pytest.raises(BudgetExceeded):
        exit_scaling(problem)


def test_window_probability_high(ou_model):
    model = _ou(n_steps=500)
    problem = _problem(model, (0.3,), n_paths=200, seed=161803,
                       max_steps=2000000)
    rep = exit_scaling(problem, eta=1.0)
    assert rep["rows"][0]["window_prob"] >= 0.95


def test_window_probability_monotone_ci_aware():
    model = _ou(n_steps=500)
    problem = _problem(model, (0.5, 0.3), n_paths=300, seed=41,
                       max_steps=2000000)
    rep = exit_scaling(problem, eta=1.0)
    big, small = rep["rows"]
    # nondecreasing as eps decreases, judged against the CIs
    assert small["window_ci"][1] >= big["window_ci"][0]


# -- exit place -------------------------------------------------------------------

def test_exit_place_symmetric():
    model = _ou(n_steps=300)
    problem = _problem(model, (0.5,), n_paths=400, seed=19)
    partition = [
        {"name": "plus", "axis": 0, "sign": 1.0, "cos_threshold": 0.0},
        {"name": "minus", "axis": 0, "sign": -1.0, "cos_threshold": 0.0},
    ]
    rep = exit_place_histogram(problem, 0.5, partition)
    p_plus = rep["cells"]["plus"]["freq"]
    se = np.sqrt(0.25 / rep["n_exits"])
    assert abs(p_plus - 0.5) < 3.0 * se
    assert rep["cells"]["other"]["count"] == 0


def test_exit_place_shadowed_cell_empty():
    model = _ou(n_steps=300)
    problem = _problem(model, (0.5,), n_paths=100, seed=23)
    partition = [
        {"name": "wide", "axis": 0, "sign": 1.0, "cos_threshold": -1.0},
        {"name": "shadowed", "axis": 0, "sign": 1.0, "cos_threshold": 0.5},
    ]
    rep = exit_place_histogram(problem, 0.5, partition)
    assert rep["cells"]["shadowed"]["count"] == 0
    assert rep["cells"]["shadowed"]["freq"] == 0.0


def test_exit_place_concentrates_on_soft_mode():
    # gamma = (1, 4): exits cluster near the mode-1 axis as eps decreases
    basis = SpectralBasis.dirichlet_interval(2, np.pi)
    model = ModelSpec(basis, DriftSpec("none"), NoiseSpec((1.0, 1.0)),
                      t_end=1.0, n_steps=500, state_norm="l2")
    dom = ExitDomain(basis.zero_field(), 1.0, "l2")
    problem = ExitProblem(model, dom, dom.center, (0.5, 0.25), 300,
                          3000000, V_UNIT, seed=29)
    cap = [{"name": "mode2cap", "axis": 1, "sign": 1.0,
            "cos_threshold": 0.9},
           {"name": "mode2capneg", "axis": 1, "sign": -1.0,
            "cos_threshold": 0.9}]
    f_big = exit_place_histogram(problem, 0.5, cap)
    f_small = exit_place_histogram(problem, 0.25, cap)

    def capfreq(rep):
        return (rep["cells"]["mode2cap"]["freq"]
                + rep["cells"]["mode2capneg"]["freq"])

    assert capfreq(f_small) <= capfreq(f_big) + 0.02
    assert capfreq(f_small) < 0.05


# -- inner regularity surrogate ------------------------------------------------------

def test_inner_regularity_trend():
    model = _ou(n_steps=100)
    dom = ExitDomain(model.basis.zero_field(), 1.0, "l2")
    trend = inner_regularity_trend(model, dom, rhos=(0.2, 0.05),
                                   horizons=(4.0, 8.0), control_dt=0.05)
    assert len(trend) == 2
    # shifted starts need less action; the trend approaches V(O, dD) = 1
    assert trend[0]["value"] <= trend[1]["value"] + 1e-6
    assert abs(trend[1]["value"] - 1.0) < 0.15
