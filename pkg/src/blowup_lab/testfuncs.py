"""Spectral test functions built from the flat Laplacian eigenfunction.

``phi_lambda(x) = phi(lambda x)`` with ``phi(x) = int_{S^{n-1}} exp(x . w) dS_w``
solves ``Delta phi_lambda = lambda^2 phi_lambda``.  In terms of ``r = |x|``

    phi(r) = |S^{n-2}| int_0^pi exp(r cos th) sin^{n-2} th dth
           = |S^{n-2}| int_0^2 exp(r (1 - w)) (w (2 - w))^{(n-3)/2} dw,   w = 1 - cos th,

and the second form is a Gauss-Jacobi integral with weight ``(w(2-w))^{(n-3)/2}``.
Everything is evaluated in the scaled form ``exp(-r) phi(r)`` so large
arguments do not overflow.  ``xi_q`` and ``eta_q`` integrate phi against
``lambda^q`` on ``[0, lambda0]`` with a Gauss-Jacobi rule carrying that weight,
which clusters nodes at ``lambda = 0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

log = logging.getLogger(__name__)

# above this argument the modified Bessel closed form replaces the angular rule
QUAD_ARG_MAX = 60.0
SINHC_TAYLOR = 1e-4


class QuadratureNonConvergence(ArithmeticError):
    pass


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^d in R^{d+1}."""
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


def bracket(s):
    """``3 + |s|``, the weight used in the auxiliary-function bounds."""
    return 3.0 + np.abs(s)


def japanese(z):
    """``sqrt(1 + z^2)``, the weight used in the eigenfunction bound."""
    return np.sqrt(1.0 + np.square(z))


def sinhc(z):
    """sinh(z)/z with a Taylor branch near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SINHC_TAYLOR
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 + z2 / 6.0 + z2 * z2 / 120.0, np.sinh(zs) / zs)


@dataclass
class PhiEvaluator:
    """Radial evaluator of phi for dimension ``n``."""

    n: int
    quad_order: int = 64
    check: bool = True
    _nodes: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("phi needs n >= 2")
        self._nodes, self._weights = self._rule(self.quad_order)
        if self.check:
            x = np.linspace(0.0, QUAD_ARG_MAX, 121)
            a = self._quad_scaled(x, self._nodes, self._weights)
            b = self._quad_scaled(x, *self._rule(2 * self.quad_order))
            rel = np.max(np.abs(a - b) / np.abs(b))
            if rel > 1e-10:
                raise QuadratureNonConvergence(
                    f"angular rule with {self.quad_order} nodes moves by {rel:.2e} on doubling")

    def _rule(self, order):
        al = (self.n - 3) / 2.0
        x, w = special.roots_jacobi(order, al, al)
        # [-1, 1] -> [0, 2]: w(2-w) = (1+x)(1-x), dw = dx
        return 1.0 + x, w * sphere_area(self.n - 2)

    @staticmethod
    def _quad_scaled(x, nodes, weights):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.multiply.outer(x, nodes)) @ weights

    def scaled(self, x):
        """``exp(-x) phi(x)`` for ``x = lambda r >= 0``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        q = x <= QUAD_ARG_MAX
        out[q] = self._quad_scaled(x[q], self._nodes, self._weights)
        if (~q).any():
            xb = x[~q]
            nu = self.n / 2.0 - 1.0
            out[~q] = (2 * math.pi) ** (self.n / 2.0) * xb ** (-nu) * special.ive(nu, xb)
        return out if out.ndim else float(out)

    def __call__(self, lam, r):
        x = np.asarray(lam, dtype=float) * np.asarray(r, dtype=float)
        return np.exp(x) * self.scaled(x)


def phi(ev: PhiEvaluator, lam, r):
    if np.any(np.asarray(lam) <= 0) or np.any(np.asarray(r) < 0):
        raise ValueError("need lambda > 0 and r >= 0")
    return ev(lam, r)


def phi_closed_form(n: int, x):
    """Modified Bessel form ``(2 pi)^{n/2} x^{1-n/2} I_{n/2-1}(x)`` (x > 0)."""
    x = np.asarray(x, dtype=float)
    nu = n / 2.0 - 1.0
    return (2 * math.pi) ** (n / 2.0) * x ** (-nu) * special.iv(nu, x)


def phi_bound_fit(ev: PhiEvaluator, lambda0: float, r_grid, n_lambda: int = 64):
    """Infimum and supremum of ``phi_lambda(r) / (<lambda r>^{-(n-1)/2} e^{lambda r})``.

    ``lambda`` runs over ``(0, lambda0]`` on a uniform grid of ``n_lambda`` points,
    ``<z> = sqrt(1 + z^2)``.  Returns ``(D0_hat, D1_hat)``.
    """
    lam = np.linspace(lambda0 / n_lambda, lambda0, n_lambda)
    x = np.multiply.outer(lam, np.asarray(r_grid, dtype=float)).ravel()
    ratio = ev.scaled(x) * japanese(x) ** ((ev.n - 1) / 2.0)
    return float(ratio.min()), float(ratio.max())


@dataclass
class SpectralKernel:
    """Quadrature data for ``xi_q`` and ``eta_q``."""

    n: int
    q: float
    lambda0: float = 0.5
    R: float = 1.0
    n_lambda: int = 128
    phi_order: int = 64
    phi: PhiEvaluator = field(init=False, repr=False)
    lam: np.ndarray = field(init=False, repr=False)
    wts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.q > -1:
            raise ValueError("q must exceed -1")
        if not (self.lambda0 > 0 and self.R > 0):
            raise ValueError("lambda0 and R must be positive")
        self.phi = PhiEvaluator(self.n, self.phi_order)
        x, w = special.roots_jacobi(self.n_lambda, 0.0, self.q)
        half = 0.5 * self.lambda0
        self.lam = half * (1.0 + x)
        self.wts = w * half ** (self.q + 1.0)

    @classmethod
    def critical(cls, n: int, p: float, **kw) -> "SpectralKernel":
        """Kernel with ``q = (n-1)/2 - 1/p``."""
        return cls(n=n, q=(n - 1) / 2.0 - 1.0 / p, **kw)

    def refined(self) -> "SpectralKernel":
        return SpectralKernel(self.n, self.q, self.lambda0, self.R, 2 * self.n_lambda, 2 * self.phi_order)

    def _grid(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        L = self.lam[None, :]
        return r[:, None], L, self.phi.scaled(r[:, None] * L)

    def xi(self, r, t):
        """``int e^{-lam(t+R)} cosh(lam t) phi_lam(r) lam^q dlam``, vectorised in r."""
        rr, L, sc = self._grid(r)
        g = 0.5 * (np.exp(-L * (self.R - rr)) + np.exp(-L * (2 * t + self.R - rr))) * sc
        return g @ self.wts

    def eta(self, r, t, s):
        """``int e^{-lam(t+R)} sinh(lam(t-s))/(lam(t-s)) phi_lam(r) lam^q dlam``."""
        rr, L, sc = self._grid(r)
        d = t - s
        g = np.exp(-L * (t + self.R - rr)) * sinhc(L * d) * sc
        return g @ self.wts


def xi_q(kernel: SpectralKernel, r, t):
    out = kernel.xi(r, t)
    return out if np.ndim(r) else float(out[0])


def eta_q(kernel: SpectralKernel, r, t, s):
    if s > t:
        raise ValueError("eta_q needs s <= t")
    out = kernel.eta(r, t, s)
    return out if np.ndim(r) else float(out[0])


@dataclass(frozen=True)
class BoundAudit:
    A0_hat: float
    B0_hat: float
    B1_hat: float
    B2_hat: float
    D0_hat: float
    D1_hat: float
    worst: dict
    grids: dict

    def constants(self) -> dict:
        return {"A0": self.A0_hat, "B0": self.B0_hat, "B1": self.B1_hat,
                "B2": self.B2_hat, "D0": self.D0_hat, "D1": self.D1_hat}


def lemma41_audit(kernel: SpectralKernel, t_grid, s_grid=None, n_r: int = 41) -> BoundAudit:
    """Fit the constants of the four auxiliary-function bounds on finite grids.

    Lower-bound constants are infima of the ratio value/bound, the upper-bound
    constant ``B2`` is a supremum.  ``s_grid`` defaults to ``t_grid``; part (ii)
    uses every pair ``s < t`` drawn from the two grids.  ``n_r`` points sample
    the admissible radii ``[0, R]``, ``[0, s+R]`` and ``[0, t+R]``.
    """
    n, q, R = kernel.n, kernel.q, kernel.R
    if not q > 0:
        raise ValueError("the lower bounds need q > 0")
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = t_grid if s_grid is None else np.asarray(s_grid, dtype=float)
    frac = np.linspace(0.0, 1.0, n_r)
    worst = {}

    def track(key, vals, ts, ss, rs, use_min):
        j = int(np.argmin(vals) if use_min else np.argmax(vals))
        prev = worst.get(key)
        v = float(vals[j])
        if prev is None or (v < prev[0] if use_min else v > prev[0]):
            worst[key] = (v, ts, ss, float(rs[j]))

    for t in t_grid:
        r = frac * R
        track("A0", xi_q(kernel, r, t), t, math.nan, r, True)
        track("B0", eta_q(kernel, r, t, 0.0) * bracket(t), t, 0.0, r, True)
        for s in s_grid[s_grid < t]:
            r = frac * (s + R)
            track("B1", eta_q(kernel, r, t, s) * bracket(t) * bracket(s) ** q, t, s, r, True)
        if t > 0 and q > (n - 3) / 2.0:
            r = frac * (t + R)
            bound = bracket(t) ** (-(n - 1) / 2.0) * bracket(t - r) ** ((n - 3) / 2.0 - q)
            track("B2", eta_q(kernel, r, t, t) / bound, t, t, r, False)
    if q <= (n - 3) / 2.0:
        log.warning("q=%g <= (n-3)/2: upper bound not audited", q)
    r_max = float(t_grid.max() + R)
    D0, D1 = phi_bound_fit(kernel.phi, kernel.lambda0, np.linspace(0.0, r_max, 4 * n_r))
    get = lambda k: worst[k][0] if k in worst else math.nan
    return BoundAudit(get("A0"), get("B0"), get("B1"), get("B2"), D0, D1,
                      {k: v[1:] for k, v in worst.items()},
                      {"t": t_grid, "s": s_grid, "n_r": n_r, "n_lambda": kernel.n_lambda})


def refine_grid(g: np.ndarray) -> np.ndarray:
    """Insert midpoints into a sorted grid."""
    g = np.asarray(g, dtype=float)
    out = np.empty(2 * g.size - 1)
    out[0::2] = g
    out[1::2] = 0.5 * (g[:-1] + g[1:])
    return out


def audit_refinement(kernel: SpectralKernel, t_grid, n_r: int = 41, tol: float = 0.05):
    """Audit on the base grids and on doubled grids with doubled quadrature.

    Returns ``(coarse, fine, drifts, failing)`` where ``failing`` lists the
    constants whose relative drift exceeds ``tol``.
    """
    coarse = lemma41_audit(kernel, t_grid, n_r=n_r)
    fine = lemma41_audit(kernel.refined(), refine_grid(t_grid), n_r=2 * n_r - 1)
    drifts, failing = {}, []
    for k, v in coarse.constants().items():
        w = fine.constants()[k]
        d = abs(w - v) / abs(w) if np.isfinite(v) and np.isfinite(w) and w != 0 else math.nan
        drifts[k] = d
        if not d <= tol:
            failing.append(k)
    if failing:
        log.warning("auxiliary-function constants drifting under refinement: %s", failing)
    return coarse, fine, drifts, failing
