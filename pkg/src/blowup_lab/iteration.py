"""Iteration and slicing sequences plus their Volterra-operator envelopes.

Sub-critical iteration: lower bounds ``G(t) > D_j (1+t)^{-a_j} t^{b_j}`` with

    a_{j+1} = p a_j + n(p-1),  b_{j+1} = p b_j + 2,
    D_{j+1} = c D_j^p / (p b_j + 2)^2,          a_1 = (n-1)p/2, b_1 = n+1, D_1 = C2 eps^p.

Critical slicing: ``F(t) >= C_j (log<t>)^{-b_j} (log(t/l_j))^{a_j}`` for ``t >= l_j``
with ``l_j = 2 - 2^{-(j+1)}``, ``a_j = (p^{j+1}-1)/(p-1)``, ``b_j = p^j - 1`` and

    log C_{j+1} = p log C_j + log E - j log(2p),       E = C (p-1) / (8 p^2).

Everything that grows like ``eps^{p^j}`` is kept in log form.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .exponents import ProblemIndex, gamma_np, strauss_exponent

log = logging.getLogger(__name__)

DIVERGENCE_CAP = 1e30
CLIP = 1e60


class NoDivergenceOnGrid(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sub-critical sequences


@dataclass(frozen=True)
class SubcritSequences:
    p: float
    n: int
    j: np.ndarray
    a: np.ndarray
    b: np.ndarray
    logD: np.ndarray
    a_closed: np.ndarray
    b_closed: np.ndarray
    c_r1r2: float
    C2: float
    C3: float
    S_p_inf: float
    alpha: float
    beta: float
    j_threshold: int
    bound_ok: bool


def subcrit_sequences(p: float, n: int, c_r1r2: float, C2: float, j_max: int = 40,
                      eps: float = 1.0) -> SubcritSequences:
    """Iterate the sub-critical sequences for ``j = 1..j_max`` (``D_1 = C2 eps^p``)."""
    ProblemIndex(n, p)
    if not p < strauss_exponent(n):
        raise ValueError(f"p={p} is not below p_S({n})")
    if not (0 < c_r1r2 <= 1):
        raise ValueError("c_r1r2 must lie in (0, 1]")
    if not (C2 > 0 and eps > 0):
        raise ValueError("C2 and eps must be positive")
    j = np.arange(1, j_max + 1)
    a = np.empty(j_max)
    b = np.empty(j_max)
    lD = np.empty(j_max)
    a[0], b[0], lD[0] = (n - 1) * p / 2.0, n + 1.0, math.log(C2) + p * math.log(eps)
    lc = math.log(c_r1r2)
    for i in range(j_max - 1):
        a[i + 1] = p * a[i] + n * (p - 1)
        b[i + 1] = p * b[i] + 2
        lD[i + 1] = p * lD[i] + lc - 2 * math.log(p * b[i] + 2)
    pw = p ** (j - 1.0)
    alpha = (n - 1) * p / 2.0 + n
    beta = n + 1 + 2.0 / (p - 1)
    a_cl = pw * alpha - n
    b_cl = pw * beta - 2.0 / (p - 1)
    C3 = c_r1r2 / beta ** 2
    S = 2 * p * math.log(p) / (p - 1) ** 2 - p * math.log(C3) / (p - 1)
    jt = math.floor(p * math.log(C3) / (2 * math.log(p)) - 1.0 / (p - 1)) + 1
    sel = j > jt
    # log D_j >= p^{j-1}(log D_1 - S), relative slack for rounding of huge values
    lhs, rhs = lD[sel], pw[sel] * (lD[0] - S)
    ok = bool(np.all(lhs >= rhs - 1e-12 * np.maximum(1.0, np.abs(rhs))))
    return SubcritSequences(p, n, j, a, b, lD, a_cl, b_cl, c_r1r2, C2, C3, S, alpha, beta, jt, ok)


@dataclass(frozen=True)
class SubcritThreshold:
    T: float
    J_at_T: float
    condition_ok: bool
    C4: float


def subcrit_J(seq: SubcritSequences, t):
    """``J(t) = log D_1 - S_p(inf) - alpha log(1+t) + beta log t``."""
    t = np.asarray(t, dtype=float)
    return seq.logD[0] - seq.S_p_inf - seq.alpha * np.log1p(t) + seq.beta * np.log(t)


def subcrit_threshold(p: float, n: int, C2: float, eps: float, c_r1r2: float = 1.0) -> SubcritThreshold:
    """``T = C4 eps^{-2p(p-1)/gamma}`` and the check ``J(T) > 1``.

    The bound assumes ``T > 1``; the returned ``T`` is ``max(C4 eps^-rate, 1)``
    nudged up by one ulp so the strict inequality is tested.
    """
    seq = subcrit_sequences(p, n, c_r1r2, C2, j_max=2, eps=eps)
    g = gamma_np(n, p)
    expo = 2 * (p - 1) / g
    C4 = math.exp(expo * (seq.S_p_inf + seq.alpha * math.log(2.0) + 1.0 - math.log(C2)))
    T = max(C4 * eps ** (-2 * p * (p - 1) / g), 1.0)
    T = math.nextafter(T, math.inf)
    J = float(subcrit_J(seq, T))
    return SubcritThreshold(T, J, J > 1.0, C4)


# ---------------------------------------------------------------------------
# critical slicing


@dataclass(frozen=True)
class CritSequences:
    p: float
    j: np.ndarray
    l: np.ndarray
    a: np.ndarray
    b: np.ndarray
    logC: np.ndarray
    logC_closed: np.ndarray
    logC_printed: np.ndarray
    E: float
    C_frame: float
    C1: float
    B: float | None
    B_printed: float | None
    max_rel_gap: float


def crit_closed_form(p, logC1, logE, j):
    """Solution of the log C_j recursion, indexed so ``j = 1`` returns ``logC1``."""
    j = np.asarray(j, dtype=float)
    m = j - 1.0
    L = math.log(2 * p)
    base = logC1 - p / (p - 1) ** 2 * L + logE / (p - 1)
    return p ** m * base - logE / (p - 1) + (p / (p - 1) ** 2 + m / (p - 1)) * L


def crit_closed_form_printed(p, logC1, logE, j):
    """Variant using p/(p-1) and j-1 where the solution has p/(p-1)^2 and (j-1)/(p-1); exact only at p = 2."""
    j = np.asarray(j, dtype=float)
    L = math.log(2 * p)
    base = logC1 - p / (p - 1) * L + logE / (p - 1)
    return p ** (j - 1) * base - logE / (p - 1) + (p / (p - 1) + j - 1) * L


def crit_sequences(p: float, C_frame: float, C1: float | None = None, j_max: int = 30,
                   N: float | None = None, eps: float | None = None,
                   logC1: float | None = None) -> CritSequences:
    """Slicing sequences for ``j = 0..j_max`` (``C_j`` from ``j = 1``).

    ``C1`` may be given directly, through ``logC1``, or as ``N eps^{p^2}``.
    ``B`` needs ``N``: with the closed form above it equals
    ``N (2p)^{-p/(p-1)^2} 2^{-p - p^2/(p-1)} E^{1/(p-1)}``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not C_frame > 0:
        raise ValueError("frame constant must be positive")
    if logC1 is None:
        if C1 is None:
            if N is None or eps is None:
                raise ValueError("need C1, logC1 or (N, eps)")
            logC1 = math.log(N) + p * p * math.log(eps)
        else:
            if not C1 > 0:
                raise ValueError("C1 must be positive")
            logC1 = math.log(C1)
    j = np.arange(0, j_max + 1)
    l = 2.0 - 2.0 ** (-(j + 1.0))
    a = (p ** (j + 1.0) - 1) / (p - 1)
    b = p ** j - 1.0
    E = C_frame * (p - 1) / (8 * p * p)
    lE = math.log(E)
    logC = np.full(j_max + 1, np.nan)
    logC[1] = logC1
    for k in range(1, j_max):
        logC[k + 1] = p * logC[k] + lE - k * math.log(2 * p)
    closed = np.full(j_max + 1, np.nan)
    printed = np.full(j_max + 1, np.nan)
    closed[1:] = crit_closed_form(p, logC1, lE, j[1:])
    printed[1:] = crit_closed_form_printed(p, logC1, lE, j[1:])
    gap = float(np.max(np.abs(closed[1:] - logC[1:]) / np.maximum(1.0, np.abs(logC[1:]))))
    B = Bp = None
    if N is not None:
        B = math.exp(math.log(N) - p / (p - 1) ** 2 * math.log(2 * p)
                     - (p + p * p / (p - 1)) * math.log(2) + lE / (p - 1))
        Bp = math.exp(math.log(N) - 2 * p * p / (p - 1) * math.log(2)
                      - p / (p - 1) * math.log(p) + lE / (p - 1))
    return CritSequences(p, j, l, a, b, logC, closed, printed, E, C_frame, math.exp(logC1) if logC1 < 700 else math.inf,
                         B, Bp, gap)


def slicing_N(C_frame: float, M: float, p: float) -> float:
    """``N = C M^p / (3^p 7)``."""
    return C_frame * M ** p / (3 ** p * 7)


@dataclass(frozen=True)
class CritThreshold:
    log_T: float
    T: float


def crit_threshold(B: float, p: float, eps: float) -> CritThreshold:
    """``T = exp(B^{-(p-1)/p} eps^{-p(p-1)})``; ``T`` is ``inf`` when it overflows."""
    if not (B > 0 and eps > 0):
        raise ValueError("B and eps must be positive")
    lt = math.exp(-(p - 1) / p * math.log(B) - p * (p - 1) * math.log(eps))
    T = math.exp(lt) if lt < 709.0 else math.inf
    return CritThreshold(lt, T)


# ---------------------------------------------------------------------------
# Volterra envelopes


@dataclass
class EnvelopeResult:
    grid: np.ndarray
    values: np.ndarray
    divergence_time: float | None
    sweeps_used: int
    history_max: list = field(default_factory=list)
    monotone: bool = True

    @property
    def diverged(self) -> bool:
        return self.divergence_time is not None


def _sweep_loop(seed, apply, max_sweeps, patience, cap, grid):
    vals = seed.copy()
    monotone = True
    hist = []
    last_idx, same = None, 0
    k = 0
    for k in range(1, max_sweeps + 1):
        new = np.minimum(np.maximum(seed, apply(vals)), CLIP)
        if np.any(new < vals * (1 - 1e-12)):
            monotone = False
        growing = (new > vals) | (new >= CLIP)
        hit = np.nonzero((new > cap) & growing)[0]
        idx = int(hit[0]) if hit.size else None
        hist.append(float(new.max()))
        stalled = np.array_equal(new, vals)
        vals = new
        if idx is not None and idx == last_idx:
            same += 1
            if same >= patience:
                break
        else:
            same = 0
        last_idx = idx
        if idx is None and stalled:
            break
    T = None if last_idx is None else grid[last_idx]
    return vals, T, k, hist, monotone


def geometric_grid(t_max: float, n_nodes: int = 4000, t_min: float = 1e-3) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n_nodes - 1)])


def subcrit_seed(t, C2, eps, p, n):
    """``C2 eps^p (1+t)^{-(n-1)p/2} t^{n+1}``."""
    t = np.asarray(t, dtype=float)
    return C2 * eps ** p * (1 + t) ** (-(n - 1) * p / 2.0) * t ** (n + 1)


def subcrit_operator(grid, c_r1r2, p, n, R):
    """Return ``G -> c int_0^t int_0^{s2} G^p(s1) (s1+R)^{(1-p)n} ds1 ds2`` on ``grid``."""
    w = (grid + R) ** ((1 - p) * n)

    def apply(G):
        f = np.power(np.minimum(G, CLIP), p) * w
        inner = integrate.cumulative_trapezoid(f, grid, initial=0.0)
        return c_r1r2 * integrate.cumulative_trapezoid(inner, grid, initial=0.0)

    return apply


def volterra_envelope_subcrit(C2: float, eps: float, c_r1r2: float, p: float, n: int, R: float = 1.0,
                              grid: np.ndarray | None = None, max_sweeps: int = 2000, patience: int = 5,
                              cap: float = DIVERGENCE_CAP, raise_on_none: bool = True) -> EnvelopeResult:
    """Monotone iteration of the sub-critical double-integral operator from its seed.

    Each sweep takes ``max(seed, Phi[G])``.  The divergence time is the first
    node above ``cap`` that is still growing, once that node has stayed fixed
    for ``patience`` sweeps.
    """
    grid = geometric_grid(1e8) if grid is None else np.asarray(grid, dtype=float)
    seed = subcrit_seed(grid, C2, eps, p, n)
    apply = subcrit_operator(grid, c_r1r2, p, n, R)
    vals, T, k, hist, mono = _sweep_loop(seed, apply, max_sweeps, patience, cap, grid)
    res = EnvelopeResult(grid, vals, None if T is None else float(T), k, hist, mono)
    if T is None and raise_on_none:
        raise NoDivergenceOnGrid(f"sub-critical envelope stays below {cap:g} on [0, {grid[-1]:g}] "
                                 f"after {k} sweeps (eps={eps})")
    return res


def log_grid(sigma_max: float = 690.0, n_nodes: int = 3000, l0: float = 1.5) -> np.ndarray:
    """Uniform grid in ``sigma = log t`` on ``[log l0, sigma_max]`` (returned as sigma)."""
    return np.linspace(math.log(l0), sigma_max, n_nodes)


def crit_seed(sigma, M, eps, p):
    """``(M/3) eps^p log(2t/3)`` with ``t = e^sigma``."""
    return M / 3.0 * eps ** p * (np.asarray(sigma) + math.log(2.0 / 3.0))


def crit_operator(sigma, C_frame, p):
    """Frame operator ``F -> C/<t> int_{l0}^t (t-s)/<s> F(s)^p / (log<s>)^{p-1} ds``.

    Works on the log grid (``ds = s dsigma``) with a trapezoid lower-triangular
    matrix whose entries are bounded by ``C * dsigma``.
    """
    sig = np.asarray(sigma, dtype=float)
    d = np.diff(sig)
    wq = np.zeros(sig.size)
    wq[:-1] += 0.5 * d
    wq[1:] += 0.5 * d
    # <s> = 3 + s;  s/<s> = 1/(1 + 3 e^{-sigma});  log<s> = sigma + log1p(3 e^{-sigma})
    s_over = 1.0 / (1.0 + 3.0 * np.exp(-sig))
    logbr = sig + np.log1p(3.0 * np.exp(-sig))
    col = s_over / logbr ** (p - 1)
    diff = sig[:, None] - sig[None, :]
    # (t - s)/<t> = (1 - e^{sigma_s - sigma_t}) t/<t>
    K = np.where(diff > 0, -np.expm1(-np.maximum(diff, 0.0)), 0.0) * s_over[:, None]
    K *= C_frame * col[None, :]
    # trapezoid over [sigma_0, sigma_i]: nodes j < i carry the full-grid weight,
    # the row node itself has zero kernel
    K *= np.tril(np.broadcast_to(wq, K.shape), k=-1)

    def apply(F):
        return K @ np.power(np.minimum(F, CLIP), p)

    return apply


def volterra_envelope_crit(M: float, eps: float, C_frame: float, p: float, sigma: np.ndarray | None = None,
                           max_sweeps: int = 5000, patience: int = 5, cap: float = DIVERGENCE_CAP,
                           raise_on_none: bool = True) -> EnvelopeResult:
    """Monotone iteration of the critical frame operator from its seed.

    The grid is in ``sigma = log t``; ``divergence_time`` is reported as ``log T``
    (``T`` itself overflows a double for small eps).
    """
    sigma = log_grid() if sigma is None else np.asarray(sigma, dtype=float)
    seed = np.maximum(crit_seed(sigma, M, eps, p), 0.0)
    apply = crit_operator(sigma, C_frame, p)
    vals, T, k, hist, mono = _sweep_loop(seed, apply, max_sweeps, patience, cap, sigma)
    res = EnvelopeResult(sigma, vals, None if T is None else float(T), k, hist, mono)
    if T is None and raise_on_none:
        raise NoDivergenceOnGrid(f"critical envelope stays below {cap:g} for log t <= {sigma[-1]:g} "
                                 f"after {k} sweeps (eps={eps})")
    return res
