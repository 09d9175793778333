"""Time-dependent damping and mass coefficients a(t), b(t).

Two families are supported.  ``ScatteringPower`` is the power-law pair

    a(t) = mu / (1+t)^beta,        b(t) = mu2 / (1+t)^(alpha_m+1)

with closed-form derivative and tail integrals, and ``CustomProfile`` wraps
user callables (tails are then estimated numerically and only reported).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

log = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegrabilityAudit:
    """Outcome of checking that a and t*b are integrable on [0, inf)."""

    l1_a: float
    l1_tb: float
    tail_a: float
    tail_tb: float
    tail_bounded: bool
    ok: bool


class CoefficientProfile:
    """Base class; subclasses provide vectorised ``a``, ``da`` and ``b``."""

    family = "abstract"

    def a(self, t):
        raise NotImplementedError

    def da(self, t):
        raise NotImplementedError

    def b(self, t):
        raise NotImplementedError

    # tails beyond H; None means "not available in closed form"
    def tail_abs_a(self, H: float) -> float | None:
        return None

    def tail_abs_tb(self, H: float) -> float | None:
        return None

    def tail_abs_b(self, H: float) -> float | None:
        return None

    def b_positive(self) -> bool:
        """True when b > 0 pointwise (checked on a probe grid for custom profiles)."""
        t = np.concatenate([np.linspace(0.0, 10.0, 201), np.geomspace(10.0, 1e6, 200)])
        return bool(np.all(np.asarray(self.b(t)) > 0.0))

    def is_zero(self) -> bool:
        t = np.linspace(0.0, 50.0, 101)
        return bool(np.all(np.asarray(self.a(t)) == 0.0) and np.all(np.asarray(self.b(t)) == 0.0))

    def params(self) -> dict:
        return {"family": self.family}

    def audit(self, horizon: float = 200.0, tol: float = 1e-3) -> IntegrabilityAudit:
        """Check that the L1 tails of |a| and t|b| beyond ``horizon`` are small."""
        l1_a = _quad(lambda s: abs(float(self.a(s))), 0.0, horizon)
        l1_tb = _quad(lambda s: s * abs(float(self.b(s))), 0.0, horizon)
        ta, ttb = self.tail_abs_a(horizon), self.tail_abs_tb(horizon)
        bounded = ta is not None and ttb is not None
        if not bounded:
            # reported, not bounded: growth of the integral between H and 4H
            ta = _quad(lambda s: abs(float(self.a(s))), horizon, 4 * horizon)
            ttb = _quad(lambda s: s * abs(float(self.b(s))), horizon, 4 * horizon)
        ok = math.isfinite(ta) and math.isfinite(ttb) and ta < tol and ttb < tol
        if not ok:
            log.warning("integrability audit: tails %.3g, %.3g exceed %.1g at H=%g", ta, ttb, tol, horizon)
        return IntegrabilityAudit(l1_a, l1_tb, ta, ttb, bounded, ok)


def _quad(fn, lo, hi):
    val, _ = integrate.quad(fn, lo, hi, limit=400)
    return val


@dataclass(frozen=True)
class ScatteringPower(CoefficientProfile):
    """a = mu/(1+t)^beta, b = mu2/(1+t)^(alpha_m+1)."""

    mu: float = 2.0
    beta: float = 2.0
    mu2: float = 1.0
    alpha_m: float = 1.5
    family = "ScatteringPower"

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("damping amplitude mu must be >= 0")
        if not self.beta > 1:
            raise ValueError("damping decay beta must be > 1")
        if not self.alpha_m > 1:
            raise ValueError("mass decay alpha_m must be > 1")

    def a(self, t):
        return self.mu * np.power(1.0 + np.asarray(t, dtype=float), -self.beta)

    def da(self, t):
        return -self.beta * self.mu * np.power(1.0 + np.asarray(t, dtype=float), -self.beta - 1.0)

    def b(self, t):
        return self.mu2 * np.power(1.0 + np.asarray(t, dtype=float), -self.alpha_m - 1.0)

    def tail_abs_a(self, H):
        return self.mu / ((self.beta - 1.0) * (1.0 + H) ** (self.beta - 1.0))

    def tail_abs_b(self, H):
        return abs(self.mu2) / (self.alpha_m * (1.0 + H) ** self.alpha_m)

    def tail_abs_tb(self, H):
        # int_H^inf t|b| dt, exact
        m, am = abs(self.mu2), self.alpha_m
        x = 1.0 + H
        return m * (x ** (1.0 - am) / (am - 1.0) - x ** (-am) / am)

    def b_positive(self):
        return self.mu2 > 0

    def is_zero(self):
        return self.mu == 0 and self.mu2 == 0

    def params(self):
        return {"family": self.family, "mu": self.mu, "beta": self.beta,
                "mu2": self.mu2, "alpha_m": self.alpha_m}


@dataclass(frozen=True)
class CustomProfile(CoefficientProfile):
    """Profile from user-supplied vectorised callables.

    ``da`` may be omitted, in which case a centred difference of ``a`` is used.
    """

    a_fn: ArrayFn
    b_fn: ArrayFn
    da_fn: ArrayFn | None = None
    label: str = "custom"
    family = "Custom"
    _fd_step: float = field(default=1e-5, repr=False)

    def a(self, t):
        return np.asarray(self.a_fn(np.asarray(t, dtype=float)), dtype=float) + 0.0 * np.asarray(t, dtype=float)

    def b(self, t):
        return np.asarray(self.b_fn(np.asarray(t, dtype=float)), dtype=float) + 0.0 * np.asarray(t, dtype=float)

    def da(self, t):
        t = np.asarray(t, dtype=float)
        if self.da_fn is not None:
            return np.asarray(self.da_fn(t), dtype=float) + 0.0 * t
        e = self._fd_step
        return (self.a(t + e) - self.a(np.maximum(t - e, 0.0))) / (t + e - np.maximum(t - e, 0.0))

    def params(self):
        return {"family": self.family, "label": self.label}


def zero_profile() -> ScatteringPower:
    return ScatteringPower(mu=0.0, beta=2.0, mu2=0.0, alpha_m=1.5)
