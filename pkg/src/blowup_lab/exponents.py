"""Exponent algebra for the damped semilinear wave problem.

Closed forms for the Strauss and Fujita exponents, the quadratic
``gamma(p, n) = 2 + (n+1)p - (n-1)p^2`` whose positive root is the Strauss
exponent, and the classification of a power ``p`` into the sub-critical,
critical and super-critical regimes together with the exponent of epsilon in
the corresponding lifespan bound.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DEFAULT_CRITICAL_TOL = 1e-9


class Criticality(enum.Enum):
    SUBCRITICAL = "SubCritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "SuperCritical"


class LifespanForm(enum.Enum):
    POWER_LAW = "PowerLaw"
    EXPONENTIAL = "Exponential"
    NONE = "None"


@dataclass(frozen=True)
class ProblemIndex:
    """Spatial dimension ``n`` and nonlinearity power ``p``."""

    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n!r}")
        if not (self.p > 1.0) or not math.isfinite(self.p):
            raise ValueError(f"power p must be a finite real > 1, got {self.p!r}")


@dataclass(frozen=True)
class CriticalityVerdict:
    regime: Criticality
    gamma_value: float
    lifespan_rate: float
    lifespan_form: LifespanForm


def gamma(idx: ProblemIndex) -> float:
    n, p = idx.n, idx.p
    return 2.0 + (n + 1) * p - (n - 1) * p * p


def gamma_np(n: int, p: float) -> float:
    """``gamma`` without the ``ProblemIndex`` validation (accepts p = 1)."""
    return 2.0 + (n + 1) * p - (n - 1) * p * p


def strauss_exponent(n: int) -> float:
    if n < 2:
        raise ValueError(f"Strauss exponent is defined here for n >= 2, got {n}")
    return (n + 1 + math.sqrt(n * n + 10 * n - 7)) / (2.0 * (n - 1))


def fujita_exponent(n: int) -> float:
    if n < 1:
        raise ValueError(f"Fujita exponent needs n >= 1, got {n}")
    return 1.0 + 2.0 / n


def subcritical_rate(idx: ProblemIndex) -> float:
    """Exponent ``2p(p-1)/gamma`` in ``T <= C eps^(-rate)``."""
    g = gamma(idx)
    if g <= 0.0:
        raise ValueError(f"gamma(p={idx.p}, n={idx.n}) = {g} <= 0: not sub-critical")
    return 2.0 * idx.p * (idx.p - 1.0) / g


def critical_rate(p: float) -> float:
    """Exponent ``p(p-1)`` in ``T <= exp(C eps^(-rate))``."""
    return p * (p - 1.0)


def classify(idx: ProblemIndex, tol: float = DEFAULT_CRITICAL_TOL) -> CriticalityVerdict:
    """Classify ``p`` against ``p_S(n)``; ``tol`` is relative to ``p_S(n)``."""
    if not tol > 0.0:
        raise ValueError("classification tolerance must be positive")
    ps = strauss_exponent(idx.n)
    g = gamma(idx)
    if abs(idx.p - ps) <= tol * ps:
        return CriticalityVerdict(Criticality.CRITICAL, g, critical_rate(idx.p), LifespanForm.EXPONENTIAL)
    if idx.p < ps:
        if g <= 0.0:
            # cannot happen for a consistent root; guards against a bad p_S
            raise ArithmeticError(f"gamma={g} <= 0 for p={idx.p} below p_S={ps}")
        return CriticalityVerdict(Criticality.SUBCRITICAL, g, subcritical_rate(idx), LifespanForm.POWER_LAW)
    return CriticalityVerdict(Criticality.SUPERCRITICAL, g, math.nan, LifespanForm.NONE)
