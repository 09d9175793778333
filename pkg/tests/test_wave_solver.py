import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowup_lab import wave_solver as ws
from blowup_lab.profiles import ScatteringPower, zero_profile
from blowup_lab.exponents import strauss_exponent

DEFAULT = ScatteringPower()
FAST = ws.InitialBump(f_amp=20.0, g_amp=20.0, eps=0.4)


# ---------------------------------------------------------------------------
# domain types


def test_grid_weights_integrate_ball_volume():
    grid = ws.RadialGrid(3, 0.001, 1.0)
    assert grid.weights().sum() == pytest.approx(4 * math.pi / 3, rel=1e-5)
    assert ws.RadialGrid.covering(3, 0.1, 1.0, 5.0).r_max >= 6.2 - 1e-12


def test_grid_validation():
    with pytest.raises(ValueError):
        ws.RadialGrid(1, 0.1, 1.0)
    with pytest.raises(ValueError):
        ws.RadialGrid(3, 0.3, 1.0)


@pytest.mark.parametrize("kw", [dict(R0=0.0), dict(m=2), dict(eps=-1.0), dict(f_amp=-1.0)])
def test_bump_validation(kw):
    with pytest.raises(ValueError):
        ws.InitialBump(**kw)


@pytest.mark.parametrize("kw", [dict(cfl=0.0), dict(cfl=1.5), dict(h=0.0), dict(M_blow=-1.0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ws.SolverParams(**kw)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_shape_integral_against_grid(n):
    bump = ws.InitialBump(R0=1.3, m=4)
    grid = ws.RadialGrid(n, 1e-3, 1.3)
    assert grid.weights() @ bump.shape(grid.r) == pytest.approx(bump.shape_integral(n), rel=1e-6)


# ---------------------------------------------------------------------------
# driver basics


def test_zero_data_stays_zero():
    rep = ws.run(3, 2.0, DEFAULT, ws.InitialBump(eps=0.0), ws.SolverParams(h=0.1, horizon=20.0))
    assert not rep.blow_up and rep.T_est is None
    assert np.all(rep.state.u == 0.0)
    assert np.all(rep.traces["G"] == 0.0)


def test_initial_mass_functional():
    bump = ws.InitialBump(f_amp=3.0, g_amp=1.0, eps=0.5)
    rep = ws.run(3, 2.0, DEFAULT, bump, ws.SolverParams(h=0.005, horizon=0.5))
    assert rep.traces["G"][0] == pytest.approx(0.5 * 3.0 * bump.shape_integral(3), rel=1e-5)


def test_weighted_functionals_at_time_zero():
    """F(0) is the grid sum against the closed-form n = 3 eigenfunction; G1(0) adds rho(0) = 1."""
    bump = ws.InitialBump(eps=0.7)
    params = ws.SolverParams(h=0.05, horizon=2.0, weights=True)
    rep = ws.run(3, strauss_exponent(3), DEFAULT, bump, params)
    grid = ws.RadialGrid.covering(3, 0.05, 1.0, 2.0)
    r = grid.r
    lam = params.lambda0
    phi3 = 4 * math.pi * np.where(r > 0, np.sinh(lam * r) / np.where(r > 0, lam * r, 1.0), 1.0)
    F0 = float(grid.weights() @ (bump.f(r) * phi3))
    assert rep.traces["F"][0] == pytest.approx(F0, rel=1e-8)
    assert rep.traces["G1"][0] == pytest.approx(F0, rel=1e-8)
    assert np.all(rep.traces["Ftilde"] > 0)


def test_linear_mode_never_blows_up():
    rep = ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=0.1, horizon=50.0, nonlinear=False))
    assert not rep.blow_up
    assert rep.support_ok


def test_linear_mode_is_linear():
    p = ws.SolverParams(h=0.1, horizon=15.0, nonlinear=False)
    u1 = ws.run(3, 2.0, DEFAULT, ws.InitialBump(eps=1.0), p).state.u
    u3 = ws.run(3, 2.0, DEFAULT, ws.InitialBump(eps=3.0), p).state.u
    assert np.allclose(u3, 3 * u1, rtol=1e-12, atol=1e-15)


def test_undamped_quadratic_blows_up():
    bump = ws.InitialBump(f_amp=20.0, g_amp=20.0, eps=0.5)
    rep = ws.run(3, 2.0, zero_profile(), bump, ws.SolverParams(h=0.1, horizon=200.0))
    assert rep.blow_up
    lo, hi = rep.last_step_interval()
    assert lo <= rep.T_est <= hi
    assert rep.step_sup[-1] >= 1e6 > rep.step_sup[-2]


def test_threshold_sensitivity_small():
    rep = ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=0.1, horizon=200.0))
    assert rep.blow_up
    assert rep.T_est_10 > rep.T_est
    assert (rep.T_est_10 - rep.T_est) / rep.T_est < 0.01


@pytest.mark.slow
def test_refinement_triple_monotone_and_contracting():
    T = [ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=h, horizon=200.0)).T_est for h in (0.1, 0.05, 0.025)]
    d1, d2 = T[1] - T[0], T[2] - T[1]
    assert (d1 > 0 and d2 > 0) or (d1 < 0 and d2 < 0)
    assert abs(d1) >= 2 * abs(d2)


def test_detect_blowup_richardson():
    est = ws.detect_blowup(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=0.1, horizon=200.0), levels=2)
    (h0, _, T0), (h1, _, T1) = est.levels
    assert h1 == h0 / 2
    assert est.converged and est.rel_gap < 0.05
    assert est.T_est == pytest.approx(ws.richardson(T0, T1))


def test_detect_blowup_without_blowup():
    with pytest.raises(ws.NonConvergence):
        ws.detect_blowup(3, 2.0, DEFAULT, ws.InitialBump(eps=0.01), ws.SolverParams(h=0.1, horizon=10.0))
    with pytest.raises(ValueError):
        ws.detect_blowup(3, 2.0, DEFAULT, FAST, ws.SolverParams(), levels=0)


def test_ode_sanity_against_reference():
    T, T_ref = ws.ode_sanity(dt=1e-3)
    assert T == pytest.approx(T_ref, rel=1e-4)


# ---------------------------------------------------------------------------
# theorem mode


def test_theorem_mode_rejects_default_profile():
    with pytest.raises(ws.HypothesisViolation, match="multiplier"):
        ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=0.1, horizon=5.0), mode="theorem")


def test_theorem_mode_rejects_negative_mass():
    with pytest.raises(ws.HypothesisViolation, match="b > 0"):
        ws.theorem_mode_check(3, 2.0, ScatteringPower(mu2=-1.0), FAST)


def test_theorem_mode_accepts_small_mass():
    prof = ScatteringPower(mu=0.5, beta=2.0, mu2=0.05, alpha_m=1.5)
    mult, rho = ws.theorem_mode_check(3, 2.0, prof, FAST)
    assert mult.c_r1r2 > 0 and rho.drho_at_0 < 0
    rep = ws.run(3, 2.0, prof, FAST, ws.SolverParams(h=0.1, horizon=5.0), mode="theorem")
    assert rep.params["mode"] == "theorem"


def test_run_mode_validation():
    with pytest.raises(ValueError):
        ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(horizon=1.0), mode="bogus")


# ---------------------------------------------------------------------------
# verification helpers


@pytest.mark.parametrize("n", [2, 3, 5])
def test_manufactured_second_order(n):
    hs = [0.05, 0.025, 0.0125]
    orders = ws.observed_order([ws.manufactured_error(n, h, DEFAULT) for h in hs], hs)
    assert np.all((orders > 1.8) & (orders < 2.2))


def test_energy_drift_second_order():
    drift = [ws.energy_drift(n=3, h=h, t_end=5.0) for h in (1 / 25, 1 / 50, 1 / 100)]
    assert drift[-1] < 5e-4
    assert all(3.5 < a / b < 4.5 for a, b in zip(drift, drift[1:]))


def test_G_identity_residual_second_order():
    res = [ws.residual_G_identity(ws.run(3, 2.0, DEFAULT, FAST, ws.SolverParams(h=h, horizon=20.0)),
                                  DEFAULT, t_max=15.0) for h in (0.1, 0.05)]
    assert res[0] / res[1] > 3.5


@settings(max_examples=8, deadline=None)
@given(st.floats(0.5, 2.0), st.integers(3, 6), st.floats(0.1, 2.0), st.sampled_from([2, 3, 4]))
def test_finite_propagation_speed(R0, m, eps, n):
    bump = ws.InitialBump(R0=R0, m=m, eps=eps)
    rep = ws.run(n, 2.0, DEFAULT, bump, ws.SolverParams(h=0.05, horizon=8.0))
    tr = rep.traces
    assert np.all(tr["support_r"] <= tr["t"] + R0 + 0.1 + 1e-9)
    assert rep.support_ok


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 1.0))
def test_mass_functional_increasing_without_mass(eps):
    """With b = 0 and nonnegative data, G' >= 0 so G grows from its initial value."""
    prof = ScatteringPower(mu2=0.0)
    rep = ws.run(3, 2.0, prof, ws.InitialBump(eps=eps), ws.SolverParams(h=0.1, horizon=30.0))
    G = rep.traces["G"]
    assert not rep.positivity_flag
    assert np.all(np.diff(G) > -1e-12 * G[0])


def test_lower_bound_constant_and_window():
    rep = ws.run(3, 2.0, DEFAULT, ws.InitialBump(eps=0.5), ws.SolverParams(h=0.1, horizon=20.0))
    c = ws.lower_bound_constant(rep, 0.5, (0.0, 15.0))
    assert c > 0
    with pytest.raises(ValueError):
        ws.lower_bound_constant(rep, 0.5, (100.0, 200.0))


def test_frame_constant_needs_weights():
    rep = ws.run(3, 2.0, DEFAULT, ws.InitialBump(), ws.SolverParams(h=0.1, horizon=5.0))
    with pytest.raises(ValueError):
        ws.frame_constant(rep)


def test_is_subcritical():
    assert ws.is_subcritical(3, 2.0)
    assert not ws.is_subcritical(3, 3.0)


def test_trace_columns_present():
    rep = ws.run(3, 2.0, DEFAULT, ws.InitialBump(), ws.SolverParams(h=0.1, horizon=3.0, sample_dt=1.0))
    assert set(rep.traces) == set(ws.TRACE_COLUMNS)
    assert rep.traces["t"].tolist() == pytest.approx([0.0, 1.0, 2.0, 3.0])
