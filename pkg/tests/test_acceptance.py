"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are repeated
in the "acceptance criteria" section of the terminal summary.  Criteria 2 and 4
are evaluated as stated and fail for the default profile: the bounded solution
k of k'' + a k' + b k = 0 vanishes near t = 0.076, so r2 = -k'/k is singular
inside [0, 200].  Those two tests are strict xfails.
"""
from __future__ import annotations

import math
import os
import time

import numpy as np
import pytest

from blowup_lab import wave_solver as ws
from blowup_lab.exponents import ProblemIndex, gamma_np, strauss_exponent
from blowup_lab.harness import SweepConfig, critical_sweep, fit_critical, fit_subcritical, run_sweep
from blowup_lab.iteration import crit_sequences, geometric_grid, slicing_N, volterra_envelope_subcrit
from blowup_lab.multiplier_ode import (NonOscillationFailure, compute_multipliers, riccati_residual,
                                       solve_chi, solve_rho)
from blowup_lab.profiles import ScatteringPower, zero_profile
from blowup_lab.testfuncs import PhiEvaluator, SpectralKernel, audit_refinement

DEFAULT = ScatteringPower(mu=2.0, beta=2.0, mu2=1.0, alpha_m=1.5)
K_ZERO = "bounded k branch vanishes near t=0.076 for the default profile, r2 singular on [0, 200]"


def test_1_exponent_algebra(acceptance):
    worst = max(abs(gamma_np(n, strauss_exponent(n))) for n in range(2, 11))
    e3 = abs(strauss_exponent(3) - (1 + math.sqrt(2)))
    e2 = abs(strauss_exponent(2) - (3 + math.sqrt(17)) / 2)
    ok = worst < 1e-12 and e3 < 1e-12 and e2 < 1e-12
    acceptance(1, "exponent algebra", ok, f"max|gamma|={worst:.1e}, |dpS3|={e3:.1e}, |dpS2|={e2:.1e}")
    assert ok


def _riccati_checks(profile, horizon=200.0):
    m = compute_multipliers(profile, horizon=horizon)
    res = riccati_residual(m.grid, m.r2, profile.a(m.grid), profile.b(m.grid), m.step)
    res_max = float(np.nanmax(np.abs(res)))
    quarter = m.grid >= 0.75 * horizon
    neg = bool(np.all(m.r2[quarter] < 0))
    m2 = compute_multipliers(profile, horizon=2 * horizon)
    shift = abs(m2.l1_r2 - m.l1_r2)
    return res_max, neg, shift


@pytest.mark.xfail(strict=True, raises=AssertionError, reason=K_ZERO)
def test_2_riccati_machinery(acceptance):
    try:
        res_max, neg, shift = _riccati_checks(DEFAULT)
        ok = res_max < 1e-8 and neg and shift < 1e-6
        detail = f"residual={res_max:.2e}, r2<0 on trailing quarter={neg}, L1 shift={shift:.1e}"
    except NonOscillationFailure as exc:
        ok, detail = False, str(exc)
    acceptance(2, "Riccati machinery", ok, detail)
    assert ok


def test_3_rho_exactness(acceptance):
    rho = solve_rho(zero_profile(), 0.5, horizon=50.0)
    err = float(np.max(np.abs(rho.rho - np.exp(-0.5 * rho.grid))))
    gen = solve_rho(DEFAULT, 0.5)
    lo, hi = gen.decay_ratio_stats
    ok = err < 1e-8 and lo > 0 and hi <= 10 * lo
    acceptance(3, "rho exactness", ok, f"max err={err:.1e}, trailing ratio in [{lo:.4f}, {hi:.4f}]")
    assert ok


@pytest.mark.xfail(strict=True, raises=AssertionError, reason=K_ZERO)
def test_4_chi_sandwich(acceptance):
    try:
        mult = compute_multipliers(DEFAULT, horizon=100.0)
        chi = solve_chi(DEFAULT, mult, 0.5, slack=1e-6, strict=False)
        ok = all(chi.sandwich_ok)
        detail = f"sandwich flags {chi.sandwich_ok}"
    except NonOscillationFailure as exc:
        ok, detail = False, str(exc)
    acceptance(4, "chi sandwich", ok, detail)
    assert ok


@pytest.mark.slow
def test_5_test_functions(acceptance):
    lam = np.array([0.05, 0.5, 2.0])
    r = np.linspace(1e-3, 25.0, 400)
    L, R = np.meshgrid(lam, r)
    x = L * R
    keep = x <= 50
    ev = PhiEvaluator(3)
    rel = float(np.max(np.abs(ev(L[keep], R[keep]) / (4 * math.pi * np.sinh(x[keep]) / x[keep]) - 1)))
    kern = SpectralKernel.critical(3, strauss_exponent(3))
    _, _, drifts, failing = audit_refinement(kern, np.linspace(0.0, 50.0, 26))
    parts = {k: drifts[k] for k in ("A0", "B0", "B1", "B2")}
    ok = rel < 1e-10 and all(d < 0.05 for d in parts.values())
    acceptance(5, "test functions", ok, f"phi rel err={rel:.1e}, drifts " +
               ", ".join(f"{k}={v:.1e}" for k, v in parts.items()))
    assert ok


@pytest.mark.slow
def test_6_solver_correctness(acceptance):
    drift = ws.energy_drift(n=3, h=1 / 200, t_end=10.0)
    hs = [0.1, 0.05, 0.025, 0.0125]
    orders = ws.observed_order([ws.manufactured_error(3, h, DEFAULT) for h in hs], hs)
    # audited runs: linear and nonlinear, damped and undamped
    reports = []
    bump = ws.InitialBump(f_amp=20.0, g_amp=20.0, eps=0.4)
    for prof, nl in ((zero_profile(), False), (DEFAULT, False), (DEFAULT, True),
                     (ScatteringPower(mu2=-1.0), True)):
        reports.append(ws.run(3, 2.0, prof, bump, ws.SolverParams(h=0.05, horizon=40.0, nonlinear=nl)))
    res = [ws.residual_G_identity(ws.run(3, 2.0, DEFAULT, bump, ws.SolverParams(h=h, horizon=40.0)),
                                  DEFAULT, t_max=15.0) for h in (0.1, 0.05)]
    shrink = res[0] / res[1]
    support = all(rep.support_ok for rep in reports)
    ok = drift < 1e-4 and bool(np.all((orders >= 1.8) & (orders <= 2.2))) and support and shrink >= 3.5
    acceptance(6, "solver correctness", ok,
               f"energy drift={drift:.1e}, orders={np.round(orders, 3).tolist()}, support={support}, "
               f"G residual shrink={shrink:.2f}")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("mu2", [1.0, -1.0])
def test_7_lifespan_scaling(acceptance, mu2):
    t0 = time.perf_counter()
    cfg = SweepConfig(mu2=mu2, workers=min(4, os.cpu_count() or 1))
    res = run_sweep(cfg)
    fit = fit_subcritical(res.rows, ProblemIndex(3, 2.0), tolerance=0.2)
    elapsed = time.perf_counter() - t0
    ok = res.ok and fit.verdict and elapsed < 15 * 60
    acceptance(f"7{'+' if mu2 > 0 else '-'}", f"lifespan scaling mu2={mu2:+g}", ok,
               f"slope={fit.slope:.4f} vs 2, rel err={fit.rel_err:.1%}, "
               f"T={[round(r.T_est, 2) for r in res.rows]}, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_8_lower_bound_constant(acceptance):
    cs = []
    for eps in (0.25, 0.5, 1.0):
        rep = ws.run(3, 2.0, DEFAULT, ws.InitialBump(eps=eps), ws.SolverParams(h=0.05, horizon=60.0))
        cs.append(ws.lower_bound_constant(rep, eps, (0.0, 50.0)))
    drift = (max(cs) - min(cs)) / min(cs)
    ok = min(cs) > 0 and drift < 0.2
    acceptance(8, "Lp lower-bound constant", ok, f"c={np.round(cs, 5).tolist()}, drift={drift:.1%}")
    assert ok


def test_9a_critical_recursion(acceptance):
    p = strauss_exponent(3)
    seq = crit_sequences(p, 10.0, j_max=30, N=slicing_N(10.0, 5.0, p), eps=0.2)
    ok = seq.max_rel_gap <= 1e-10
    acceptance("9a", "critical C_j recursion vs closed form", ok, f"max log gap={seq.max_rel_gap:.1e}")
    assert ok


@pytest.mark.slow
def test_9b_critical_envelope(acceptance):
    p = strauss_exponent(3)
    eps = [0.3, 0.2, 0.15, 0.1]
    rows = critical_sweep(eps, p, M=5.0, C_frame=10.0)
    fit = fit_critical([r.eps for r in rows], [r.T_est for r in rows], p)
    ok = fit.verdict and fit.points_used == 4
    acceptance("9b", "critical envelope log T linear in eps^-p(p-1)", ok,
               f"R2={fit.r_squared:.5f}, log T={[round(r.T_est, 2) for r in rows]}")
    assert ok


@pytest.mark.slow
def test_9c_frame_inequality(acceptance):
    p = strauss_exponent(3)
    rep = ws.run(3, p, DEFAULT, ws.InitialBump(eps=1.0),
                 ws.SolverParams(h=0.05, horizon=20.0, sample_dt=0.25, weights=True))
    c = ws.frame_constant(rep, l0=1.5, t_end=20.0)
    ok = c > 0
    acceptance("9c", "solver F~ frame inequality", ok, f"fitted c={c:.4f}")
    assert ok


def test_10_subcritical_envelope(acceptance):
    n, p = 3, 2.0
    target = 2 ** (2 * p * (p - 1) / gamma_np(n, p))
    grid = geometric_grid(1e8, 3000)
    T = [volterra_envelope_subcrit(1.0, e, 1.0, p, n, grid=grid).divergence_time for e in (0.4, 0.2, 0.1, 0.05)]
    ratios = [b / a for a, b in zip(T, T[1:])]
    ok = all(abs(r / target - 1) < 0.2 for r in ratios)
    acceptance(10, "sub-critical envelope halving ratio", ok,
               f"ratios={np.round(ratios, 3).tolist()} vs {target:g}")
    assert ok
