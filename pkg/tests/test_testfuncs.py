import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from blowup_lab.exponents import strauss_exponent
from blowup_lab.testfuncs import (PhiEvaluator, SpectralKernel, bracket, eta_q, japanese, lemma41_audit,
                                  phi, phi_bound_fit, phi_closed_form, refine_grid, sinhc, sphere_area,
                                  xi_q)

EV = {n: PhiEvaluator(n) for n in (2, 3, 4, 5)}


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)
    assert sphere_area(3) == pytest.approx(2 * math.pi ** 2)


@given(st.floats(-30.0, 30.0))
def test_sinhc(z):
    ref = 1.0 if z == 0 else math.sinh(z) / z
    assert sinhc(z) == pytest.approx(ref, rel=1e-12)


def test_weights():
    assert bracket(-2.0) == 5.0
    assert japanese(0.0) == 1.0
    assert japanese(3.0) == pytest.approx(math.sqrt(10))


@given(st.floats(1e-3, 2.0), st.floats(0.0, 40.0))
def test_phi_n3_closed_form(lam, r):
    x = lam * r
    ref = 4 * math.pi * (math.sinh(x) / x if x > 0 else 1.0)
    assert EV[3](lam, r) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("n", [2, 4, 5])
def test_phi_matches_bessel_form(n):
    x = np.linspace(0.01, 80.0, 300)
    ref = phi_closed_form(n, x)
    assert np.allclose(EV[n](1.0, x), ref, rtol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_phi_value_at_origin_is_sphere_area(n):
    assert EV[n](0.5, 0.0) == pytest.approx(sphere_area(n - 1), rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_phi_is_radial_eigenfunction(n):
    lam, h = 0.7, 1e-3
    r = np.linspace(0.5, 20.0, 50)
    f = lambda s: EV[n](lam, s)
    lap = (f(r + h) - 2 * f(r) + f(r - h)) / h ** 2 + (n - 1) / r * (f(r + h) - f(r - h)) / (2 * h)
    assert np.allclose(lap, lam ** 2 * f(r), rtol=1e-5)


def test_phi_validation():
    with pytest.raises(ValueError):
        phi(EV[3], -1.0, 1.0)
    with pytest.raises(ValueError):
        PhiEvaluator(1)


def test_phi_envelope_bounds_positive_and_finite():
    D0, D1 = phi_bound_fit(EV[3], 0.5, np.linspace(0.0, 60.0, 121))
    assert 0 < D0 <= D1 < np.inf


def _xi_direct(n, q, lam0, R, r, t):
    ev = EV[n]
    f = lambda lam: math.exp(-lam * (t + R)) * math.cosh(lam * t) * float(ev(lam, r)) * lam ** q
    return integrate.quad(f, 0.0, lam0, epsabs=0, epsrel=1e-12, limit=200)[0]


def _eta_direct(n, q, lam0, R, r, t, s):
    ev = EV[n]
    def f(lam):
        d = lam * (t - s)
        return math.exp(-lam * (t + R)) * float(sinhc(d)) * float(ev(lam, r)) * lam ** q
    return integrate.quad(f, 0.0, lam0, epsabs=0, epsrel=1e-12, limit=200)[0]


@given(st.floats(0.0, 20.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=25, deadline=None)
def test_xi_eta_against_adaptive_quadrature(t, rf, sf):
    q = 1.0 - 1.0 / strauss_exponent(3)
    kern = SpectralKernel(3, q, lambda0=0.5, R=1.0)
    s = sf * t
    r = rf * (s + 1.0)
    assert xi_q(kern, r, t) == pytest.approx(_xi_direct(3, q, 0.5, 1.0, r, t), rel=1e-9)
    assert eta_q(kern, r, t, s) == pytest.approx(_eta_direct(3, q, 0.5, 1.0, r, t, s), rel=1e-9)


def test_eta_requires_ordered_times():
    kern = SpectralKernel.critical(3, strauss_exponent(3))
    with pytest.raises(ValueError):
        eta_q(kern, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        SpectralKernel(3, -1.5)


def test_lemma41_constants_positive():
    kern = SpectralKernel.critical(3, strauss_exponent(3))
    audit = lemma41_audit(kern, np.linspace(0.0, 20.0, 11), n_r=11)
    c = audit.constants()
    for k in ("A0", "B0", "B1", "B2", "D0", "D1"):
        assert 0 < c[k] < np.inf, k
    assert set(audit.worst) == {"A0", "B0", "B1", "B2"}
    with pytest.raises(ValueError):
        lemma41_audit(SpectralKernel(3, -0.5), [0.0, 1.0])


def test_refine_grid():
    assert refine_grid(np.array([0.0, 1.0, 3.0])).tolist() == [0.0, 0.5, 1.0, 2.0, 3.0]


def test_phi_worked_example():
    assert EV[3](1.0, 2.0) == pytest.approx(4 * math.pi * math.sinh(2.0) / 2.0, rel=1e-12)
    assert EV[3](1.0, 2.0) == pytest.approx(22.788, abs=5e-4)


def test_xi_eta_worked_example():
    """q = 1, r = 0, t = s = 0, lambda0 = 0.5, R = 1: both reduce to 4 pi (1 - 1.5 e^{-1/2})."""
    kern = SpectralKernel(3, 1.0, lambda0=0.5, R=1.0)
    ref = 4 * math.pi * (1 - 1.5 * math.exp(-0.5))
    assert xi_q(kern, 0.0, 0.0) == pytest.approx(ref, rel=1e-12)
    assert eta_q(kern, 0.0, 0.0, 0.0) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(1.13354, abs=1e-5)
