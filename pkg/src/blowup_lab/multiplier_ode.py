"""Multiplier ODEs attached to the damping/mass pair (a, b).

* The Riccati pair ``r1 + r2 = a``, ``r2' + a r2 - r2^2 = b`` is linearised by
  ``r2 = -k'/k`` with ``k'' + a k' + b k = 0`` and solved backward from the
  horizon on the bounded (``k -> const``) branch.
* The decaying profile ``rho`` solves ``rho'' - a rho' + (b - lam^2 - a') rho = 0``;
  it is computed through ``eta = rho e^{lam t}``, which satisfies
  ``eta'' - (2 lam + a) eta' + (lam a + b - a') eta = 0`` and is integrated
  backward from ``eta(H) = 1, eta'(H) = 0`` (the growing mode decays backward).
* ``chi1, chi2`` form the fundamental pair of ``chi'' + (r1 - r2) chi' - lam^2 chi = 0``.

All integrations use classical RK4 with a fixed step so every quantity lives
on one uniform grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import integrate

from .profiles import CoefficientProfile, ScatteringPower

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 200.0
DEFAULT_STEP = 1e-3
FAR_FIELD_T = 1e12


class NonOscillationFailure(ArithmeticError):
    """k (or eta) changed sign on the grid."""


class DivergentL1(ArithmeticError):
    """The trailing tail of |r2| does not decay."""


class SandwichViolation(ArithmeticError):
    def __init__(self, which, index, t, value, lower, upper):
        super().__init__(f"{which} leaves its envelope at node {index} (t={t:.6g}): "
                         f"{value:.6g} not in [{lower:.6g}, {upper:.6g}]")
        self.which, self.index, self.t = which, index, t


@numba.njit(cache=True)
def _rk4_linear2(P, Pm, Q, Qm, h, y_start, dy_start, backward):
    """RK4 for y'' + P y' + Q y = 0 on a uniform grid.

    ``P, Q`` hold node values, ``Pm, Qm`` the values at interval midpoints
    (``Pm[i]`` sits between nodes i and i+1).
    """
    N = P.shape[0]
    y = np.empty(N)
    dy = np.empty(N)
    if backward:
        i0, s, hh = N - 1, -1, -h
    else:
        i0, s, hh = 0, 1, h
    y[i0] = y_start
    dy[i0] = dy_start
    i = i0
    for _ in range(N - 1):
        j = i + s
        mid = min(i, j)
        a0, b0 = dy[i], -P[i] * dy[i] - Q[i] * y[i]
        y1, v1 = y[i] + 0.5 * hh * a0, dy[i] + 0.5 * hh * b0
        a1, b1 = v1, -Pm[mid] * v1 - Qm[mid] * y1
        y2, v2 = y[i] + 0.5 * hh * a1, dy[i] + 0.5 * hh * b1
        a2, b2 = v2, -Pm[mid] * v2 - Qm[mid] * y2
        y3, v3 = y[i] + hh * a2, dy[i] + hh * b2
        a3, b3 = v3, -P[j] * v3 - Q[j] * y3
        y[j] = y[i] + hh * (a0 + 2 * a1 + 2 * a2 + a3) / 6.0
        dy[j] = dy[i] + hh * (b0 + 2 * b1 + 2 * b2 + b3) / 6.0
        i = j
    return y, dy


def make_grid(horizon: float, step: float, t0: float = 0.0) -> np.ndarray:
    """Uniform grid ``t0, t0+step, ..., horizon``."""
    span = horizon - t0
    if not (span > 0 and step > 0 and t0 >= 0):
        raise ValueError("need 0 <= t0 < horizon and step > 0")
    n = int(round(span / step))
    if abs(n * step - span) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon - t0 = {span} is not a multiple of step {step}")
    return t0 + step * np.arange(n + 1)


def midpoints_cubic(v: np.ndarray) -> np.ndarray:
    """Four-point Lagrange values at interval midpoints of a uniform grid."""
    if v.size < 4:
        return 0.5 * (v[:-1] + v[1:])
    m = np.empty(v.size - 1)
    m[1:-1] = (-v[:-3] + 9 * v[1:-2] + 9 * v[2:-1] - v[3:]) / 16.0
    m[0] = (5 * v[0] + 15 * v[1] - 5 * v[2] + v[3]) / 16.0
    m[-1] = (v[-4] - 5 * v[-3] + 15 * v[-2] + 5 * v[-1]) / 16.0
    return m


def centered_derivative(v: np.ndarray, h: float) -> np.ndarray:
    """Five-point fourth-order centred derivative; NaN on the two end nodes each side."""
    d = np.full(v.size, np.nan)
    if v.size >= 5:
        d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12.0 * h)
    return d


# ---------------------------------------------------------------------------
# far field of the Riccati equation


@dataclass(frozen=True)
class FarField:
    """r2 at the horizon plus the L1 tails of r1, r2 and r1 - r2 beyond it."""

    r2_H: float
    tail_r1: float
    tail_r2: float
    tail_diff: float


def _asymptotic_r2(profile: CoefficientProfile, t: float) -> float:
    # r2 ~ -int_t^inf b as t -> inf (the quadratic and damping terms are higher order)
    if isinstance(profile, ScatteringPower):
        return -profile.mu2 / (profile.alpha_m * (1.0 + t) ** profile.alpha_m)
    return 0.0


def far_field(profile: CoefficientProfile, horizon: float, t_far: float = FAR_FIELD_T) -> FarField:
    """Integrate the Riccati equation in log time from ``t_far`` back to ``horizon``.

    Carries the running integrals of |r2|, |a - r2| and |a - 2 r2|; the part
    beyond ``t_far`` uses the leading-order asymptotics of r2.
    """
    if profile.is_zero():
        return FarField(0.0, 0.0, 0.0, 0.0)
    s_far, s_H = math.log1p(t_far), math.log1p(horizon)

    def rhs(s, y):
        t = math.expm1(s)
        a, b = float(profile.a(t)), float(profile.b(t))
        r2 = y[0]
        w = t + 1.0
        return [w * (b - a * r2 + r2 * r2), -w * abs(r2), -w * abs(a - r2), -w * abs(a - 2 * r2)]

    rem = [_remainder(profile, t_far, c) for c in (0.0, 1.0, 2.0)]
    y0 = [_asymptotic_r2(profile, t_far), rem[0], rem[1], rem[2]]
    sol = integrate.solve_ivp(rhs, (s_far, s_H), y0, method="DOP853", rtol=1e-12, atol=1e-15)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise DivergentL1(f"far-field Riccati integration failed: {sol.message}")
    r2_H, t2, t1, td = sol.y[:, -1]
    return FarField(float(r2_H), float(t1), float(t2), float(td))


def _remainder(profile, t_far, c):
    """Tail beyond ``t_far`` of |r2| (c=0), |a - r2| (c=1) or |a - 2 r2| (c=2)."""
    wa = 0.0 if c == 0 else 1.0
    wr = 1.0 if c == 0 else c

    def f(t):
        return abs(wa * float(profile.a(t)) - wr * _asymptotic_r2(profile, t))

    val, _ = integrate.quad(f, t_far, np.inf, limit=200)
    return val if math.isfinite(val) else 0.0


# ---------------------------------------------------------------------------
# k, r1, r2


@dataclass(frozen=True)
class MultiplierData:
    grid: np.ndarray
    k: np.ndarray
    dk: np.ndarray
    r2: np.ndarray
    r1: np.ndarray
    r2_mid: np.ndarray
    l1_r1: float
    l1_r2: float
    l1_diff: float
    c_r1r2: float
    r2_at_0: float
    residual_max: float
    step: float
    horizon: float
    terminal: str

    @property
    def diff(self) -> np.ndarray:
        """r1 - r2 on the grid."""
        return self.r1 - self.r2


def _solve_k_full(profile, horizon, step, terminal, t0=0.0):
    t = make_grid(horizon, step, t0)
    tm = t[:-1] + 0.5 * step
    if terminal == "farfield":
        ff = far_field(profile, horizon)
        dk_H = -ff.r2_H
    elif terminal == "zero":
        ff = None
        dk_H = 0.0
    else:
        raise ValueError(f"unknown terminal condition {terminal!r}")
    P, Pm = profile.a(t), profile.a(tm)
    Q, Qm = profile.b(t), profile.b(tm)
    k, dk = _rk4_linear2(P, Pm, Q, Qm, step, 1.0, dk_H, True)
    if not np.all(np.isfinite(k)) or np.any(k <= 0.0):
        bad = int(np.nonzero(~(k > 0.0))[0].max())
        err = NonOscillationFailure(f"k vanishes near t={t[bad]:.6g}: the bounded branch has a zero on "
                                    f"[{t[0]:.6g}, {horizon:g}], so r2 = -k'/k is singular there")
        err.last_zero = float(t[bad])
        raise err
    return t, k, dk, ff


def solve_k(profile: CoefficientProfile, horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP,
            terminal: str = "farfield", t0: float = 0.0) -> np.ndarray:
    """Bounded solution of ``k'' + a k' + b k = 0`` with ``k(horizon) = 1``.

    ``terminal="farfield"`` sets ``k'(H) = -r2(H) k(H)`` with r2(H) taken from a
    log-time integration of the Riccati equation out to t = 1e12;
    ``terminal="zero"`` uses the plain truncation ``k'(H) = 0``.  The grid
    starts at ``t0``; a zero of k on it raises ``NonOscillationFailure``.
    """
    return _solve_k_full(profile, horizon, step, terminal, t0)[1]


def last_zero_of_k(profile: CoefficientProfile, horizon: float = DEFAULT_HORIZON,
                   step: float = DEFAULT_STEP, terminal: str = "farfield") -> float | None:
    """Largest grid time where the bounded branch k is <= 0, or None if k > 0 on [0, horizon]."""
    try:
        _solve_k_full(profile, horizon, step, terminal)
    except NonOscillationFailure as exc:
        return getattr(exc, "last_zero", None)
    return None


def riccati_residual(t, r2, a, b, step):
    d = centered_derivative(r2, step)
    res = d + a * r2 - r2 * r2 - b
    return res


def compute_multipliers(profile: CoefficientProfile, horizon: float = DEFAULT_HORIZON,
                        step: float = DEFAULT_STEP, terminal: str = "farfield",
                        t0: float = 0.0) -> MultiplierData:
    """Riccati pair on ``[t0, horizon]``; L1 norms include the far-field tail."""
    t, k, dk, ff = _solve_k_full(profile, horizon, step, terminal, t0)
    a = profile.a(t)
    r2 = -dk / k
    r1 = a - r2
    res = riccati_residual(t, r2, a, profile.b(t), step)
    residual_max = float(np.nanmax(np.abs(res))) if t.size >= 5 else 0.0

    n = t.size
    if n >= 16:
        tail = np.abs(r2[-n // 8:]).mean()
        before = np.abs(r2[-n // 4:-n // 8]).mean()
        if not np.isfinite(tail) or tail > before * (1 + 1e-9) + 1e-14:
            raise DivergentL1(f"|r2| does not decay on the trailing grid ({before:.3g} -> {tail:.3g})")

    l1_r2 = integrate.trapezoid(np.abs(r2), t)
    l1_r1 = integrate.trapezoid(np.abs(r1), t)
    l1_diff = integrate.trapezoid(np.abs(r1 - r2), t)
    if ff is not None:
        l1_r1 += ff.tail_r1
        l1_r2 += ff.tail_r2
        l1_diff += ff.tail_diff
    else:
        tail_a = profile.tail_abs_a(horizon) or 0.0
        l1_r1 += tail_a
        l1_diff += tail_a
    c = math.exp(-l1_r1 - l1_r2)
    return MultiplierData(grid=t, k=k, dk=dk, r2=r2, r1=r1, r2_mid=midpoints_cubic(r2),
                          l1_r1=float(l1_r1), l1_r2=float(l1_r2), l1_diff=float(l1_diff),
                          c_r1r2=c, r2_at_0=float(r2[0]), residual_max=residual_max,
                          step=step, horizon=horizon, terminal=terminal)


# ---------------------------------------------------------------------------
# rho


@dataclass(frozen=True)
class RhoData:
    lam: float
    grid: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    drho_at_0: float
    ratio_min: float
    ratio_max: float

    @property
    def decay_ratio_stats(self):
        return self.ratio_min, self.ratio_max

    def exp_ratio(self) -> np.ndarray:
        """rho(t) e^{lam t}."""
        return self.rho * np.exp(self.lam * self.grid)


def solve_rho(profile: CoefficientProfile, lam: float, horizon: float = DEFAULT_HORIZON,
              step: float = DEFAULT_STEP) -> RhoData:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t = make_grid(horizon, step)
    tm = t[:-1] + 0.5 * step
    P = -(2 * lam + profile.a(t))
    Pm = -(2 * lam + profile.a(tm))
    Q = lam * profile.a(t) + profile.b(t) - profile.da(t)
    Qm = lam * profile.a(tm) + profile.b(tm) - profile.da(tm)
    eta, deta = _rk4_linear2(P, Pm, Q, Qm, step, 1.0, 0.0, True)
    if not np.all(np.isfinite(eta)) or np.any(eta <= 0.0):
        bad = int(np.argmax(~(eta > 0.0)))
        raise NonOscillationFailure(f"eta loses positivity at t={t[bad]:.6g}")
    decay = np.exp(-lam * t)
    rho = eta * decay / eta[0]
    drho = (deta - lam * eta) * decay / eta[0]
    ratio = eta / eta[0]
    half = ratio[t.size // 2:]
    return RhoData(lam=lam, grid=t, rho=rho, drho=drho, drho_at_0=float(deta[0] / eta[0] - lam),
                   ratio_min=float(half.min()), ratio_max=float(half.max()))


# ---------------------------------------------------------------------------
# chi


@dataclass(frozen=True)
class ChiData:
    lam: float
    s: float
    grid: np.ndarray
    chi1: np.ndarray
    chi2: np.ndarray
    lower1: np.ndarray
    upper1: np.ndarray
    lower2: np.ndarray
    upper2: np.ndarray
    sandwich_ok: tuple


def solve_chi(profile: CoefficientProfile, multipliers: MultiplierData, lam: float, s: float = 0.0,
              slack: float = 1e-6, strict: bool = True) -> ChiData:
    """Fundamental pair from ``s`` on the multiplier grid plus the envelope audit.

    The envelopes use the full L1 norm of ``r1 - r2``.  With ``strict`` the first
    failing node raises ``SandwichViolation``; otherwise the flags are returned.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t_all = multipliers.grid
    h = multipliers.step
    i0 = int(round((s - t_all[0]) / h))
    if not (0 <= i0 < t_all.size - 1) or abs(t_all[i0] - s) > 1e-9 * max(1.0, s):
        raise ValueError(f"s={s} must be a grid node strictly below the horizon")
    t = t_all[i0:]
    P = (profile.a(t) - 2 * multipliers.r2[i0:])
    tm = t[:-1] + 0.5 * h
    Pm = profile.a(tm) - 2 * multipliers.r2_mid[i0:]
    Q = np.full(t.size, -lam * lam)
    Qm = np.full(t.size - 1, -lam * lam)
    chi1, _ = _rk4_linear2(P, Pm, Q, Qm, h, 1.0, 0.0, False)
    chi2, _ = _rk4_linear2(P, Pm, Q, Qm, h, 0.0, 1.0, False)
    D = multipliers.l1_diff
    x = lam * (t - t[0])
    ch, sh = np.cosh(x), np.sinh(x) / lam
    lo1, up1 = math.exp(-D) * ch, ch
    lo2, up2 = math.exp(-2 * D) * sh, math.exp(D) * sh
    f = 1.0 + slack
    bad1 = (lo1 > chi1 * f) | (chi1 > up1 * f)
    bad2 = (lo2 > chi2 * f) | (chi2 > up2 * f)
    if strict:
        for name, bad, v, lo, up in (("chi1", bad1, chi1, lo1, up1), ("chi2", bad2, chi2, lo2, up2)):
            if bad.any():
                j = int(np.argmax(bad))
                raise SandwichViolation(name, i0 + j, float(t[j]), float(v[j]), float(lo[j]), float(up[j]))
    return ChiData(lam, float(t[0]), t, chi1, chi2, lo1, up1, lo2, up2,
                   (not bad1.any(), not bad2.any()))


# ---------------------------------------------------------------------------
# sign conditions


def check_data_conditions(f0: float, g0: float, multipliers: MultiplierData, rho: RhoData,
                          a0: float) -> tuple[bool, bool]:
    """Scalar form of the two positivity conditions on data ``(f0 bump, g0 bump)``."""
    return (bool(g0 + multipliers.r2_at_0 * f0 >= 0.0),
            bool(g0 + (a0 - rho.drho_at_0) * f0 >= 0.0))


def relaxed_sign_expression(profile: CoefficientProfile, t) -> np.ndarray:
    a = profile.a(t)
    return 0.5 * profile.da(t) + 0.25 * a * a - profile.b(t)


def check_relaxed_sign(profile: CoefficientProfile, horizon: float = DEFAULT_HORIZON,
                       samples: int = 2001) -> bool:
    """Whether ``a'/2 + a^2/4 - b < 0`` on the trailing half of [0, horizon]."""
    t = np.linspace(0.5 * horizon, horizon, samples)
    return bool(np.all(relaxed_sign_expression(profile, t) < 0.0))
