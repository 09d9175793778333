"""Radial finite-difference solver for the damped semilinear wave equation

    u_tt - u_rr - (n-1)/r u_r + a(t) u_t + b(t) u = |u|^p,   u(0) = eps f, u_t(0) = eps g.

Scheme: centred second differences in r and t on r_i = i h, with the damping
and mass terms averaged between the outer time levels and the nonlinearity
explicit.  The default time step is dt = h, where the three-point stencil moves
information exactly one node per step, so the discrete support never outruns
the light cone.  The origin value is closed by even reflection,
u_0 = (4 u_1 - u_2) / 3.  The outer node carries a homogeneous Dirichlet
condition and is never reached by the support.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, special

from .exponents import Criticality, ProblemIndex, classify
from .multiplier_ode import (NonOscillationFailure, check_data_conditions, compute_multipliers,
                             solve_rho)
from .profiles import CoefficientProfile
from .testfuncs import PhiEvaluator, SpectralKernel, bracket, sphere_area

log = logging.getLogger(__name__)

DEFAULT_CFL = 1.0
DEFAULT_M_BLOW = 1e6
SUPPORT_TOL = 1e-12
REFINE_TOL = 0.05
POSITIVITY_NOISE = 1e-10
INTEGRABILITY_HORIZON = 1e4
INTEGRABILITY_TOL = 0.05


class BlowUpDetected(RuntimeError):
    def __init__(self, t, sup):
        super().__init__(f"sup|u| = {sup:.3g} at t = {t:.6g}")
        self.t, self.sup = t, sup


class SupportViolation(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass


class HypothesisViolation(ValueError):
    """Theorem-mode data or coefficient conditions fail."""


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class RadialGrid:
    n: int
    h: float
    r_max: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("radial solver needs n >= 2")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if abs(self.N * self.h - self.r_max) > 1e-9 * self.r_max:
            raise ValueError("r_max must be a multiple of h")

    @classmethod
    def covering(cls, n: int, h: float, R: float, t_max: float) -> "RadialGrid":
        """Smallest grid with r_max >= R + t_max + 2h."""
        N = int(math.ceil((R + t_max) / h - 1e-9)) + 2
        return cls(n, h, N * h)

    @property
    def N(self) -> int:
        return int(round(self.r_max / self.h))

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights for the measure |S^{n-1}| r^{n-1} dr."""
        w = sphere_area(self.n - 1) * self.r ** (self.n - 1) * self.h
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class InitialBump:
    """eps * amp * (1 - (r/R0)^2)^m on r <= R0."""

    R0: float = 1.0
    m: int = 3
    f_amp: float = 1.0
    g_amp: float = 1.0
    eps: float = 1.0

    def __post_init__(self):
        if not self.R0 > 0:
            raise ValueError("R0 must be positive")
        if self.m < 3:
            raise ValueError("bump exponent m must be >= 3")
        if self.f_amp < 0 or self.g_amp < 0 or self.eps < 0:
            raise ValueError("amplitudes and eps must be nonnegative")

    def shape(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R0, np.clip(1.0 - (r / self.R0) ** 2, 0.0, None) ** self.m, 0.0)

    def f(self, r):
        return self.eps * self.f_amp * self.shape(r)

    def g(self, r):
        return self.eps * self.g_amp * self.shape(r)

    def shape_integral(self, n: int) -> float:
        """Exact integral of the shape over R^n."""
        return sphere_area(n - 1) * 0.5 * self.R0 ** n * special.beta(n / 2.0, self.m + 1.0)

    def with_eps(self, eps: float) -> "InitialBump":
        return InitialBump(self.R0, self.m, self.f_amp, self.g_amp, eps)


@dataclass(frozen=True)
class ArrayData:
    """Arbitrary radial data given by callables; only valid in free mode."""

    f_fn: object
    g_fn: object
    R0: float

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return np.asarray(self.f_fn(r), dtype=float) + 0.0 * r

    def g(self, r):
        r = np.asarray(r, dtype=float)
        return np.asarray(self.g_fn(r), dtype=float) + 0.0 * r


@dataclass
class RadialWaveState:
    u: np.ndarray
    u_prev: np.ndarray
    t: float
    dt: float

    @property
    def v(self) -> np.ndarray:
        """Backward difference of u in time."""
        return (self.u - self.u_prev) / self.dt


@dataclass
class SolverParams:
    h: float = 0.05
    cfl: float = DEFAULT_CFL
    horizon: float = 100.0
    M_blow: float = DEFAULT_M_BLOW
    nonlinear: bool = True
    laplacian: bool = True
    sample_dt: float = 0.5
    audit: bool = True
    weights: bool = False
    lambda0: float = 0.5

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not (self.h > 0 and self.horizon > 0 and self.M_blow > 0 and self.sample_dt > 0):
            raise ValueError("h, horizon, M_blow and sample_dt must be positive")

    @property
    def dt(self) -> float:
        return self.cfl * self.h


@dataclass
class Forcing:
    """Separable source sum_k c_k(t) S_k(r); ``coeffs(t)`` returns the c_k."""

    spatial: list
    coeffs: object


@dataclass
class SolveReport:
    traces: dict
    blow_up: bool
    T_est: float | None
    T_est_10: float | None = None
    refinement: list = field(default_factory=list)
    residual_G: float = float("nan")
    sensitivity: float = float("nan")
    support_ok: bool = True
    positivity_flag: bool = False
    step_t: np.ndarray | None = None
    step_G: np.ndarray | None = None
    step_Lp: np.ndarray | None = None
    step_sup: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    state: RadialWaveState | None = None

    def last_step_interval(self):
        if self.step_t is None or self.step_t.size < 2:
            return None
        return float(self.step_t[-2]), float(self.step_t[-1])


# ---------------------------------------------------------------------------
# numerical kernel


def stencil(n: int, N: int, h: float):
    """Coefficients of u_{i+1} and u_{i-1} in the radial Laplacian (index 0 unused)."""
    i = np.arange(N + 1, dtype=float)
    i[0] = 1.0
    cp = (1.0 + (n - 1) / (2.0 * i)) / (h * h)
    cm = (1.0 - (n - 1) / (2.0 * i)) / (h * h)
    cp[0] = cm[0] = 0.0
    return cp, cm


@numba.njit(cache=True)
def _march(U, iprev, icur, cp, cm, ih2, dt, t0, a_arr, b_arr, p, nl, lap, S, C,
           front0, use_window, wq, M1, M2, step_t, step_G, step_Lp, step_sup, k_off):
    """Advance ``a_arr.size`` steps.  Returns (iprev, icur, steps, t1, t2)."""
    N = U.shape[1] - 1
    dt2 = dt * dt
    nsrc = S.shape[0]
    inext = 3 - iprev - icur
    t1 = -1.0
    t2 = -1.0
    sup_prev = step_sup[k_off - 1] if k_off > 0 else 0.0
    t = t0
    p2 = p == 2.0
    for k in range(a_arr.size):
        up = U[iprev]
        uc = U[icur]
        un = U[inext]
        a = a_arr[k]
        b = b_arr[k]
        lo = 1.0 - 0.5 * a * dt + 0.5 * b * dt2
        hi = 1.0 + 0.5 * a * dt + 0.5 * b * dt2
        if use_window:
            imax = min(N - 1, front0 + k_off + k + 2)
        else:
            imax = N - 1
        i0 = 1 if lap else 0
        for i in range(i0, imax + 1):
            ui = uc[i]
            rhs = 0.0
            if lap:
                rhs = cp[i] * uc[i + 1] - 2.0 * ih2 * ui + cm[i] * uc[i - 1]
            if nl != 0.0:
                rhs += nl * (ui * ui if p2 else abs(ui) ** p)
            for s in range(nsrc):
                rhs += C[k, s] * S[s, i]
            un[i] = (2.0 * ui - lo * up[i] + dt2 * rhs) / hi
        if lap:
            un[0] = (4.0 * un[1] - un[2]) / 3.0
        t += dt
        sup = 0.0
        G = 0.0
        Lp = 0.0
        ok = True
        for i in range(imax + 1):
            v = un[i]
            if not math.isfinite(v):
                ok = False
                break
            av = abs(v)
            if av > sup:
                sup = av
            G += wq[i] * v
            Lp += wq[i] * (v * v if p2 else av ** p)
        j = k_off + k
        step_t[j] = t
        step_G[j] = G
        step_Lp[j] = Lp
        step_sup[j] = sup if ok else math.inf
        iprev, icur, inext = icur, inext, iprev
        if ok and t1 < 0.0 and sup >= M1:
            t1 = _cross(t, dt, sup_prev, sup, M1)
        if not ok or sup >= M2:
            t2 = _cross(t, dt, sup_prev, sup, M2) if ok else t
            if t1 < 0.0:
                t1 = t2
            return iprev, icur, k + 1, t1, t2
        sup_prev = sup
    return iprev, icur, a_arr.size, t1, t2


@numba.njit(cache=True)
def _cross(t, dt, s0, s1, M):
    # exponential interpolation of sup|u| inside the last step
    if s0 > 0.0 and s1 > s0 and s0 < M:
        return t - dt + dt * (math.log(M) - math.log(s0)) / (math.log(s1) - math.log(s0))
    return t


def _laplacian(u, cp, cm, n, h):
    L = np.zeros_like(u)
    L[1:-1] = cp[1:-1] * u[2:] - 2.0 * u[1:-1] / (h * h) + cm[1:-1] * u[:-2]
    L[0] = 2.0 * n * (u[1] - u[0]) / (h * h)
    return L


# ---------------------------------------------------------------------------
# functionals


def functional_G(state: RadialWaveState, grid: RadialGrid) -> float:
    return float(grid.weights() @ state.u)


@dataclass
class WeightSet:
    """Evaluators behind G1, F and F~ for one run."""

    n: int
    p: float
    profile: CoefficientProfile
    lambda0: float = 0.5
    R: float = 1.0
    horizon: float = 200.0
    phi_ev: PhiEvaluator = field(init=False, repr=False)
    kernel: SpectralKernel | None = field(init=False, repr=False)
    rho_t: np.ndarray = field(init=False, repr=False)
    rho_exp: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.phi_ev = PhiEvaluator(self.n)
        step = max(1e-3, self.horizon / 2e5)
        rho = solve_rho(self.profile, self.lambda0, horizon=max(self.horizon, 10.0), step=step)
        self.rho_t, self.rho_exp = rho.grid, rho.exp_ratio()
        q = (self.n - 1) / 2.0 - 1.0 / self.p
        self.kernel = SpectralKernel(self.n, q, lambda0=self.lambda0, R=self.R) if q > -1 else None

    def rho_scaled(self, t: float) -> float:
        """rho(t) e^{lambda0 t}, held constant past the tabulated horizon."""
        return float(np.interp(t, self.rho_t, self.rho_exp))

    def phi_weight(self, r, t):
        """phi_{lambda0}(r) e^{-lambda0 t}; overflows only through the caller's rescaling."""
        lam = self.lambda0
        return np.exp(lam * (r - t)) * self.phi_ev.scaled(lam * r)

    def eta_diag(self, r, t):
        if self.kernel is None:
            return np.full(np.shape(r), np.nan)
        return self.kernel.eta(r, t, t)


def functional_weighted(state: RadialWaveState, grid: RadialGrid, weights: WeightSet, which: str) -> float:
    """Weighted integrals: ``psi`` (G1), ``phi_lambda`` (F) or ``eta_q_diag`` (F~)."""
    r = grid.r
    w = grid.weights()
    nz = np.nonzero(state.u)[0]
    if nz.size == 0:
        return 0.0
    top = nz[-1] + 1
    u, r, w = state.u[:top], r[:top], w[:top]
    t = state.t
    if which == "psi":
        return float(weights.rho_scaled(t) * (w * u) @ weights.phi_weight(r, t))
    if which == "phi_lambda":
        lt = weights.lambda0 * t
        return math.exp(lt) * float((w * u) @ weights.phi_weight(r, t)) if lt <= 700.0 else math.inf
    if which == "eta_q_diag":
        return float((w * u) @ weights.eta_diag(r, t))
    raise ValueError(f"unknown weight {which!r}")


# ---------------------------------------------------------------------------
# driver


TRACE_COLUMNS = ("t", "G", "G1", "F", "Ftilde", "Lp", "sup_u", "support_r")


def theorem_mode_check(n: int, p: float, profile: CoefficientProfile, bump: InitialBump,
                       lambda0: float = 0.5):
    """Raise HypothesisViolation unless the theorem-mode hypotheses hold."""
    ProblemIndex(n, p)
    if not profile.b_positive():
        raise HypothesisViolation("theorem mode needs b > 0")
    audit = profile.audit(horizon=INTEGRABILITY_HORIZON, tol=INTEGRABILITY_TOL)
    if not audit.ok:
        raise HypothesisViolation("coefficients fail the integrability audit")
    try:
        mult = compute_multipliers(profile)
    except NonOscillationFailure as exc:
        raise HypothesisViolation(f"no positive multiplier pair on [0, inf): {exc}") from exc
    rho = solve_rho(profile, lambda0)
    f0, g0 = bump.eps * bump.f_amp, bump.eps * bump.g_amp
    ok = check_data_conditions(f0, g0, mult, rho, float(profile.a(0.0)))
    if not all(ok):
        raise HypothesisViolation(f"data conditions fail: {ok}")
    return mult, rho


def run(n: int, p: float, profile: CoefficientProfile, bump: InitialBump | ArrayData, params: SolverParams,
        mode: str = "free", forcing: Forcing | None = None, R_support: float | None = None,
        r_max: float | None = None) -> SolveReport:
    """Integrate until sup|u| passes 10 M_blow, the horizon, or a non-finite value."""
    if mode not in ("free", "theorem"):
        raise ValueError("mode must be 'free' or 'theorem'")
    if mode == "theorem":
        if not isinstance(bump, InitialBump):
            raise HypothesisViolation("theorem mode needs a nonnegative bump")
        theorem_mode_check(n, p, profile, bump, params.lambda0)
    h, dt = params.h, params.dt
    R0 = bump.R0 if R_support is None else R_support
    grid = RadialGrid.covering(n, h, R0, params.horizon) if r_max is None else RadialGrid(n, h, r_max)
    r = grid.r
    N = grid.N
    cp, cm = stencil(n, N, h)
    wq = grid.weights()
    lap = params.laplacian
    nl = 1.0 if params.nonlinear else 0.0

    if forcing is not None:
        S = np.array([np.asarray(s(r), dtype=float) for s in forcing.spatial])
        S[:, -1] = 0.0
    else:
        S = np.zeros((0, N + 1))

    def src(t):
        if forcing is None:
            return 0.0
        return np.asarray(forcing.coeffs(t), dtype=float) @ S

    U = np.zeros((3, N + 1))
    u0 = bump.f(r)
    g0 = bump.g(r)
    u0[-1] = g0[-1] = 0.0
    a0, b0 = float(profile.a(0.0)), float(profile.b(0.0))
    lap0 = _laplacian(u0, cp, cm, n, h) if lap else 0.0
    u1 = u0 + dt * g0 + 0.5 * dt * dt * (lap0 - a0 * g0 - b0 * u0 + nl * np.abs(u0) ** p + src(0.0))
    if lap:
        u1[0] = (4 * u1[1] - u1[2]) / 3.0
    u1[-1] = 0.0
    U[0], U[1] = u0, u1
    nzd = np.nonzero(u0 != 0.0)[0]
    front0 = int(nzd[-1]) + 1 if nzd.size else 0
    use_window = forcing is None and lap and params.cfl == 1.0

    n_steps = int(math.floor(params.horizon / dt + 1e-9))
    step_t = np.empty(n_steps + 1)
    step_G = np.empty(n_steps + 1)
    step_Lp = np.empty(n_steps + 1)
    step_sup = np.empty(n_steps + 1)
    step_t[:2] = 0.0, dt
    for j, uu in enumerate((u0, u1)):
        step_G[j] = wq @ uu
        step_Lp[j] = wq @ np.abs(uu) ** p
        step_sup[j] = np.abs(uu).max()

    weights = None
    if params.weights:
        weights = WeightSet(n, p, profile, params.lambda0, R0, max(params.horizon, 10.0))
    every = max(1, int(round(params.sample_dt / dt)))
    rows = []
    support_ok = True
    iprev, icur = 0, 1
    k = 1  # index of the current level in the step arrays
    t1 = t2 = -1.0
    nsrc = S.shape[0]

    def sample(u, t):
        nonlocal support_ok
        big = np.nonzero(np.abs(u) > SUPPORT_TOL)[0]
        supp = float(r[big[-1]]) if big.size else 0.0
        if params.audit and forcing is None and lap and supp > t + R0 + 2 * h + 1e-9:
            support_ok = False
            raise SupportViolation(f"support radius {supp:.6g} exceeds t + R0 + 2h = {t + R0 + 2 * h:.6g}")
        st = RadialWaveState(u, u, t, dt)
        G1 = F = Ft = math.nan
        if weights is not None:
            G1 = functional_weighted(st, grid, weights, "psi")
            F = functional_weighted(st, grid, weights, "phi_lambda")
            Ft = functional_weighted(st, grid, weights, "eta_q_diag")
        rows.append((t, float(wq @ u), G1, F, Ft, float(wq @ np.abs(u) ** p),
                     float(np.abs(u).max()), supp))

    sample(U[0], 0.0)
    while k < n_steps:
        chunk = min(every - (k % every) if k % every else every, n_steps - k)
        tk = step_t[k] + dt * np.arange(chunk)
        a_arr = np.asarray(profile.a(tk), dtype=float) * np.ones(chunk)
        b_arr = np.asarray(profile.b(tk), dtype=float) * np.ones(chunk)
        C = (np.array([np.asarray(forcing.coeffs(t), dtype=float) for t in tk]).reshape(chunk, nsrc)
             if forcing is not None else np.zeros((chunk, 0)))
        iprev, icur, done, c1, c2 = _march(U, iprev, icur, cp, cm, 1.0 / (h * h), dt, step_t[k], a_arr,
                                           b_arr, float(p), nl, lap, S, C, front0, use_window, wq,
                                           params.M_blow, 10.0 * params.M_blow, step_t, step_G,
                                           step_Lp, step_sup, k + 1)
        # _march writes steps k+1 .. k+done; front0 offset counts from step 1
        k += done
        if t1 < 0 and c1 >= 0:
            t1 = c1
        if c2 >= 0:
            t2 = c2
            break
        if k % every == 0:
            sample(U[icur], step_t[k])
    blow = t2 >= 0
    if not blow and (k % every):
        sample(U[icur], step_t[k])
    stop = k
    if blow:
        # step arrays end at the first level past M_blow, so T_est sits in the last interval
        stop = int(np.argmax(step_sup[: k + 1] >= params.M_blow))
    sl = slice(0, stop + 1)
    traces = {c: np.array([row[j] for row in rows]) for j, c in enumerate(TRACE_COLUMNS)}
    G = traces["G"]
    pre = G[: max(1, G.size - 1)] if blow else G
    positivity_flag = bool(np.any(pre < -POSITIVITY_NOISE))
    if positivity_flag:
        log.warning("G(t) dips below zero beyond quadrature noise")
    report = SolveReport(
        traces=traces, blow_up=blow, T_est=t1 if blow else None, T_est_10=t2 if blow else None,
        support_ok=support_ok, positivity_flag=positivity_flag,
        step_t=step_t[sl].copy(), step_G=step_G[sl].copy(), step_Lp=step_Lp[sl].copy(),
        step_sup=step_sup[sl].copy(),
        params={"n": n, "p": p, "h": h, "dt": dt, "mode": mode, "eps": getattr(bump, "eps", 1.0), **profile.params()},
        state=RadialWaveState(U[icur].copy(), U[iprev].copy(), float(step_t[k]), dt))
    if blow:
        report.sensitivity = abs(t2 - t1)
        report.refinement = [(h, dt, t1)]
    report.residual_G = residual_G_identity(report, profile)
    return report


def residual_G_identity(report: SolveReport, profile: CoefficientProfile, t_max: float | None = None) -> float:
    """max |D^2 G + a D G + b G - int |u|^p| over interior steps (before t_max)."""
    t, G, Lp = report.step_t, report.step_G, report.step_Lp
    if t is None or t.size < 3:
        return 0.0
    dt = float(t[1] - t[0])
    stop = t.size - 1
    if t_max is not None:
        stop = min(stop, int(np.searchsorted(t, t_max, side="right")))
    if report.blow_up:
        stop = min(stop, t.size - 2)
    if stop < 2:
        return 0.0
    tm = t[1:stop]
    d2 = (G[2:stop + 1] - 2 * G[1:stop] + G[:stop - 1]) / dt ** 2
    d1 = (G[2:stop + 1] - G[:stop - 1]) / (2 * dt)
    res = d2 + profile.a(tm) * d1 + profile.b(tm) * G[1:stop] - Lp[1:stop]
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# lifespan estimation


@dataclass
class LifespanEstimate:
    T_est: float
    levels: list
    converged: bool
    sensitivity: float
    rel_gap: float


def richardson(T_h: float, T_h2: float) -> float:
    return T_h2 + (T_h2 - T_h) / 3.0


def detect_blowup(n: int, p: float, profile: CoefficientProfile, bump: InitialBump, params: SolverParams,
                  levels: int = 2, mode: str = "free", tol: float = REFINE_TOL, strict: bool = True) -> LifespanEstimate:
    """Threshold-crossing lifespan at h, h/2, ... with Richardson extrapolation of the last two."""
    if levels < 1:
        raise ValueError("need at least one refinement level")
    out = []
    sens = 0.0
    for j in range(levels):
        pj = dataclasses.replace(params, h=params.h / 2 ** j, weights=False)
        rep = run(n, p, profile, bump, pj, mode=mode)
        if not rep.blow_up:
            raise NonConvergence(f"no blow-up before horizon {params.horizon} at h={pj.h}")
        out.append((pj.h, pj.dt, rep.T_est))
        sens = rep.sensitivity
    Ts = [T for _, _, T in out]
    if levels == 1:
        return LifespanEstimate(Ts[0], out, True, sens, 0.0)
    gap = abs(Ts[-1] - Ts[-2]) / Ts[-1]
    ok = gap <= tol
    if not ok and strict:
        raise NonConvergence(f"refinement levels differ by {gap:.1%} (> {tol:.0%})")
    return LifespanEstimate(richardson(Ts[-2], Ts[-1]), out, ok, sens, gap)


def ode_reference_time(p: float, u0: float, v0: float, M: float) -> float:
    """Adaptive reference for u'' = |u|^p reaching u = M."""
    def ev(t, y):
        return y[0] - M
    ev.terminal = True
    ev.direction = 1
    sol = integrate.solve_ivp(lambda t, y: [y[1], abs(y[0]) ** p], (0.0, 1e4), [u0, v0],
                              method="DOP853", rtol=1e-12, atol=1e-14, events=ev)
    if not sol.t_events[0].size:
        raise NonConvergence("reference ODE did not reach the threshold")
    return float(sol.t_events[0][0])


def ode_sanity(p: float = 2.0, u0: float = 1.0, v0: float = 0.0, dt: float = 1e-3,
               M_blow: float = DEFAULT_M_BLOW) -> tuple[float, float]:
    """Blow-up time of the solver with the Laplacian off against the adaptive reference."""
    from .profiles import zero_profile
    params = SolverParams(h=dt, cfl=1.0, horizon=1e3, M_blow=M_blow, laplacian=False, sample_dt=1e3)
    data = ArrayData(lambda r: np.full(r.shape, u0), lambda r: np.full(r.shape, v0), R0=1.0)
    # a few independent nodes carrying the same constant data
    rep = run(3, p, zero_profile(), data, params, r_max=3 * dt)
    return rep.T_est, ode_reference_time(p, u0, v0, M_blow)


# ---------------------------------------------------------------------------
# verification helpers


def discrete_energy(u_prev: np.ndarray, u: np.ndarray, grid: RadialGrid, dt: float) -> float:
    """Quadrature of (u_t^2 + u_r^2) r^{n-1} dr at the half level between two time levels."""
    r = grid.r
    h = grid.h
    ut = (u - u_prev) / dt
    ubar = 0.5 * (u + u_prev)
    ur = np.diff(ubar) / h
    rm = r[:-1] + 0.5 * h
    return float(h * (np.sum(ut * ut * r ** (grid.n - 1)) + np.sum(ur * ur * rm ** (grid.n - 1))))


def energy_drift(n: int = 3, h: float = 1 / 200, t_end: float = 10.0, R0: float = 1.0, m: int = 6,
                 cfl: float = DEFAULT_CFL) -> float:
    """Relative drift of the linear free-wave energy over [0, t_end]."""
    from .profiles import zero_profile
    bump = InitialBump(R0=R0, m=m, f_amp=1.0, g_amp=0.0, eps=1.0)
    prof = zero_profile()
    params = SolverParams(h=h, cfl=cfl, horizon=t_end, nonlinear=False, sample_dt=t_end)
    grid = RadialGrid.covering(n, h, R0, t_end)
    cp, cm = stencil(n, grid.N, h)
    dt = params.dt
    r = grid.r
    u0 = bump.f(r)
    u1 = u0 + 0.5 * dt * dt * _laplacian(u0, cp, cm, n, h)
    u1[0] = (4 * u1[1] - u1[2]) / 3.0
    E0 = discrete_energy(u0, u1, grid, dt)
    rep = run(n, 2.0, prof, bump, params)
    E1 = discrete_energy(rep.state.u_prev, rep.state.u, grid, dt)
    return abs(E1 - E0) / E0


def manufactured_error(n: int, h: float, profile: CoefficientProfile, p: float = 2.0, t_end: float = 1.0,
                       nonlinear: bool = True) -> float:
    """Max-norm error against u* = e^{-t} (1 - (r/2)^2)^3 with the matching source."""
    P = lambda r: (1.0 - (r / 2.0) ** 2) ** 3
    def lapP(r):
        x = (r / 2.0) ** 2
        return -1.5 * n * (1 - x) ** 2 + 6.0 * x * (1 - x)
    nl = 1.0 if nonlinear else 0.0
    def coeffs(t):
        a, b = float(profile.a(t)), float(profile.b(t))
        return (math.exp(-t) * (1.0 + b - a), -math.exp(-t), -nl * math.exp(-p * t))
    forcing = Forcing([P, lapP, lambda r: np.abs(P(r)) ** p], coeffs)
    bump = ArrayData(P, lambda r: -P(r), R0=2.0)
    params = SolverParams(h=h, cfl=DEFAULT_CFL, horizon=t_end, nonlinear=nonlinear, sample_dt=t_end, audit=False)
    rep = run(n, p, profile, bump, params, forcing=forcing, r_max=2.0)
    r = np.arange(rep.state.u.size) * h
    exact = math.exp(-rep.state.t) * P(r)
    return float(np.max(np.abs(rep.state.u - exact)))


def observed_order(errors, hs) -> np.ndarray:
    e, hh = np.asarray(errors), np.asarray(hs)
    return np.log(e[:-1] / e[1:]) / np.log(hh[:-1] / hh[1:])


# ---------------------------------------------------------------------------
# corroboration fits


def lower_bound_constant(report: SolveReport, eps: float, t_window: tuple[float, float]) -> float:
    """min over the window of int|u|^p / (eps^p (1+t)^{n-1-(n-1)p/2})."""
    n, p = report.params["n"], report.params["p"]
    t = report.traces["t"]
    sel = (t >= t_window[0]) & (t <= t_window[1])
    if not sel.any():
        raise ValueError("empty window")
    kappa = n - 1 - (n - 1) * p / 2.0
    ratio = report.traces["Lp"][sel] / (eps ** p * (1.0 + t[sel]) ** kappa)
    return float(ratio.min())


def frame_constant(report: SolveReport, l0: float = 1.5, t_end: float = 20.0) -> float:
    """Largest c with F~(t) >= c/<t> int_0^t (t-s)/<s> F~^p/(log<s>)^{p-1} ds on [l0, t_end]."""
    p = report.params["p"]
    t = report.traces["t"]
    Ft = report.traces["Ftilde"]
    if np.any(~np.isfinite(Ft)):
        raise ValueError("F~ trace is missing; run with weights enabled")
    integrand_base = np.clip(Ft, 0.0, None) ** p / np.log(bracket(t)) ** (p - 1) / bracket(t)
    vals = []
    for j in range(t.size):
        if t[j] < l0 or t[j] > t_end:
            continue
        ker = (t[j] - t[: j + 1]) * integrand_base[: j + 1]
        I = integrate.trapezoid(ker, t[: j + 1]) / bracket(t[j])
        if I > 0:
            vals.append(Ft[j] / I)
    if not vals:
        raise ValueError("window holds no usable samples")
    return float(min(vals))


def is_subcritical(n: int, p: float) -> bool:
    return classify(ProblemIndex(n, p)).regime == Criticality.SUBCRITICAL
