"""Epsilon sweeps over the solver, lifespan scaling fits and CSV output."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .exponents import Criticality, ProblemIndex, classify, critical_rate
from .iteration import NoDivergenceOnGrid, log_grid, subcrit_threshold, volterra_envelope_crit
from .profiles import ScatteringPower
from .wave_solver import InitialBump, NonConvergence, SolverParams, detect_blowup, theorem_mode_check

log = logging.getLogger(__name__)

MIN_FIT_POINTS = 4
R2_THRESHOLD = 0.95
FLOAT_FMT = "{:.12e}"


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    n: int = 3
    p: float = 2.0
    mu: float = 2.0
    beta: float = 2.0
    mu2: float = 1.0
    alpha_m: float = 1.5
    R0: float = 1.0
    m: int = 3
    f_amp: float = 20.0
    g_amp: float = 20.0
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05, 0.025)
    h: float = 0.1
    cfl: float = 1.0
    M_blow: float = 1e6
    horizon: float = 100.0
    horizon_max: float = 40000.0
    levels: int = 2
    refine_tol: float = 0.05
    mode: str = "free"
    workers: int = 1
    tolerance: float = 0.2
    C2: float = 1.0
    c_r1r2: float = 1.0

    def __post_init__(self):
        e = self.eps_list
        if any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ValueError("eps ladder must be positive and strictly decreasing")

    @classmethod
    def from_dict(cls, cfg: dict) -> "SweepConfig":
        keys = cls.__dataclass_fields__
        kw = {k: cfg[k] for k in keys if k in cfg}
        kw["eps_list"] = tuple(kw.get("eps_list", cls.eps_list))
        return cls(**kw)

    def profile(self) -> ScatteringPower:
        return ScatteringPower(self.mu, self.beta, self.mu2, self.alpha_m)

    def bump(self, eps: float) -> InitialBump:
        return InitialBump(self.R0, self.m, self.f_amp, self.g_amp, eps)

    def solver(self, horizon: float) -> SolverParams:
        return SolverParams(h=self.h, cfl=self.cfl, horizon=horizon, M_blow=self.M_blow,
                            sample_dt=max(1.0, horizon / 200.0))


@dataclass(frozen=True)
class SweepRow:
    eps: float
    T_est: float
    converged: bool
    sensitivity: float
    h_finest: float
    note: str = ""


@dataclass
class SweepResult:
    rows: list
    ok: bool
    flagged: list = field(default_factory=list)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr_slope: float
    theory_slope: float
    rel_err: float
    points_used: int
    verdict: bool
    r_squared: float
    model: str


def _predicted_horizon(cfg: SweepConfig) -> float:
    """Twice the iteration-bound threshold at the largest eps, clamped to horizon_max."""
    try:
        pred = subcrit_threshold(cfg.p, cfg.n, cfg.C2, cfg.eps_list[0], cfg.c_r1r2).T
    except ValueError:
        pred = 0.0
    return min(cfg.horizon_max, max(cfg.horizon, 2.0 * pred))


def _one_row(args) -> SweepRow:
    cfg, eps, horizon = args
    try:
        est = detect_blowup(cfg.n, cfg.p, cfg.profile(), cfg.bump(eps), cfg.solver(horizon),
                            levels=cfg.levels, mode="free", tol=cfg.refine_tol, strict=False)
    except NonConvergence as exc:
        return SweepRow(eps, math.nan, False, math.nan, cfg.h / 2 ** (cfg.levels - 1), str(exc))
    note = "" if est.converged else f"refinement gap {est.rel_gap:.3g}"
    return SweepRow(eps, est.T_est, est.converged, est.sensitivity, est.levels[-1][0], note)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """One lifespan estimate per eps.

    The first (largest) eps runs on the predicted horizon; the remaining rows get
    ``4 T_0 (eps_0/eps)^rate`` clamped to ``horizon_max``, with ``rate`` the
    sub-critical exponent, so horizons never depend on scheduling.
    """
    idx = ProblemIndex(cfg.n, cfg.p)
    verdict = classify(idx)
    if cfg.mode == "theorem":
        theorem_mode_check(cfg.n, cfg.p, cfg.profile(), cfg.bump(cfg.eps_list[0]))
    rate = verdict.lifespan_rate if verdict.regime == Criticality.SUBCRITICAL else 2.0
    first = _one_row((cfg, cfg.eps_list[0], _predicted_horizon(cfg)))
    rows = [first]
    rest = cfg.eps_list[1:]
    if rest:
        T0 = first.T_est if math.isfinite(first.T_est) else cfg.horizon
        jobs = [(cfg, e, min(cfg.horizon_max, max(cfg.horizon, 4.0 * T0 * (cfg.eps_list[0] / e) ** rate)))
                for e in rest]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
                rows += list(ex.map(_one_row, jobs))
        else:
            rows += [_one_row(j) for j in jobs]
    for r in rows:
        if not r.converged:
            log.warning("eps=%g excluded: %s", r.eps, r.note or "not converged")
    flagged = _monotonicity_flags(rows)
    n_ok = sum(r.converged for r in rows)
    ok = not flagged and (n_ok >= MIN_FIT_POINTS or len(rows) < MIN_FIT_POINTS)
    return SweepResult(rows, ok, flagged)


def _monotonicity_flags(rows) -> list:
    """eps values where a converged T_est fails to increase along the ladder."""
    bad = []
    prev = None
    for r in rows:
        if not r.converged:
            continue
        if prev is not None and not r.T_est > prev.T_est:
            bad.append(r.eps)
        prev = r
    if bad:
        log.error("T_est not increasing at eps=%s", bad)
    return bad


def _usable(rows):
    return [r for r in rows if r.converged and math.isfinite(r.T_est) and r.T_est > 0]


def fit_subcritical(rows, idx: ProblemIndex, tolerance: float = 0.2) -> ScalingFit:
    """OLS of log T against log(1/eps), compared with 2p(p-1)/gamma."""
    use = _usable(rows)
    dropped = len(rows) - len(use)
    if dropped:
        log.info("fit excludes %d unconverged rows", dropped)
    if len(use) < MIN_FIT_POINTS:
        raise InsufficientData(f"{len(use)} converged rows, need {MIN_FIT_POINTS}")
    verdict = classify(idx)
    if verdict.regime != Criticality.SUBCRITICAL:
        raise ValueError("fit_subcritical needs a sub-critical power")
    x = np.log(1.0 / np.array([r.eps for r in use]))
    y = np.log(np.array([r.T_est for r in use]))
    res = stats.linregress(x, y)
    theory = verdict.lifespan_rate
    rel = abs(res.slope - theory) / abs(theory)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.stderr), theory, rel, len(use),
                      bool(rel <= tolerance), float(res.rvalue ** 2), "power")


def fit_critical(eps, log_T, p: float) -> ScalingFit:
    """OLS of log T against eps^{-p(p-1)}; the verdict is on linearity only."""
    eps = np.asarray(eps, dtype=float)
    y = np.asarray(log_T, dtype=float)
    keep = np.isfinite(y)
    if keep.sum() < MIN_FIT_POINTS:
        raise InsufficientData(f"{int(keep.sum())} usable rows, need {MIN_FIT_POINTS}")
    x = eps[keep] ** (-critical_rate(p))
    res = stats.linregress(x, y[keep])
    r2 = float(res.rvalue ** 2)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.stderr), math.nan, math.nan,
                      int(keep.sum()), r2 >= R2_THRESHOLD, r2, "exponential")


def critical_sweep(eps_list, p: float, M: float = 5.0, C_frame: float = 10.0,
                   sigma_max: float = 690.0, n_nodes: int = 3000, max_sweeps: int = 5000):
    """Critical-frame envelope divergence (log T) per eps; rows that never diverge give NaN."""
    sigma = log_grid(sigma_max, n_nodes)
    out = []
    for e in eps_list:
        try:
            res = volterra_envelope_crit(M, e, C_frame, p, sigma=sigma, max_sweeps=max_sweeps)
            out.append(SweepRow(e, res.divergence_time, True, math.nan, math.nan, "log T"))
        except NoDivergenceOnGrid as exc:
            out.append(SweepRow(e, math.nan, False, math.nan, math.nan, str(exc)))
    return out


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FLOAT_FMT.format(float(v))


def write_csv(path: Path, header, rows):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(rows, fit: ScalingFit | None, out_dir, kind: str = "subcritical", p: float = 2.0) -> list:
    """sweep.csv, fit.csv and the two-column plot-data file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not rows:
        log.warning("no sweep rows; writing headers only")
    files = [write_csv(out / "sweep.csv", ("eps", "T_est", "converged", "sensitivity", "h_finest"),
                       [(r.eps, r.T_est, r.converged, r.sensitivity, r.h_finest) for r in rows])]
    fit_rows = [] if fit is None else [(fit.slope, fit.stderr_slope, fit.theory_slope, fit.rel_err,
                                        "pass" if fit.verdict else "fail")]
    files.append(write_csv(out / "fit.csv", ("slope", "stderr", "theory_slope", "rel_err", "verdict"), fit_rows))
    use = _usable(rows) if kind == "subcritical" else [r for r in rows if r.converged]
    if kind == "subcritical":
        pts = [(math.log(1.0 / r.eps), math.log(r.T_est)) for r in use]
        files.append(write_csv(out / "plot_loglog.csv", ("log_inv_eps", "log_T"), pts))
    else:
        pts = [(r.eps ** (-critical_rate(p)), r.T_est) for r in use]
        files.append(write_csv(out / "plot_critical.csv", ("eps_pow", "log_T"), pts))
    return files
