"""Command line entry point ``blowup-lab``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 hypothesis violation (theorem-mode conditions).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .exponents import ProblemIndex, classify, fujita_exponent, gamma_np, strauss_exponent
from .harness import (InsufficientData, SweepConfig, critical_sweep, emit_outputs, fit_critical,
                      fit_subcritical, run_sweep, write_csv)
from .iteration import (NoDivergenceOnGrid, crit_sequences, geometric_grid, log_grid, slicing_N,
                        subcrit_sequences, volterra_envelope_crit, volterra_envelope_subcrit)
from .multiplier_ode import (DivergentL1, NonOscillationFailure, compute_multipliers, riccati_residual,
                             solve_chi, solve_rho)
from .profiles import ScatteringPower
from .testfuncs import PhiEvaluator, QuadratureNonConvergence, SpectralKernel, japanese, lemma41_audit
from .wave_solver import (HypothesisViolation, InitialBump, NonConvergence, SolverParams,
                          SupportViolation, run)

log = logging.getLogger("blowup_lab")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 1, 2, 3
NUMERIC_ERRORS = (NonConvergence, NoDivergenceOnGrid, NonOscillationFailure, DivergentL1,
                  QuadratureNonConvergence, SupportViolation, InsufficientData)


def _profile(c) -> ScatteringPower:
    return ScatteringPower(c["mu"], c["beta"], c["mu2"], c["alpha_m"])


def cmd_exponents(c, out: Path) -> int:
    n, p = c["n"], c["p"]
    v = classify(ProblemIndex(n, p))
    vals = {"n": n, "p": p, "gamma": gamma_np(n, p), "p_strauss": strauss_exponent(n),
            "p_fujita": fujita_exponent(n), "regime": v.regime.value, "rate": v.lifespan_rate,
            "form": v.lifespan_form.value}
    write_csv(out / "exponents.csv", tuple(vals), [tuple(vals.values())])
    for k, x in vals.items():
        print(f"{k}={x:.12g}" if isinstance(x, float) else f"{k}={x}")
    return EXIT_OK


def cmd_ode(c, out: Path) -> int:
    prof = _profile(c)
    mult = compute_multipliers(prof, c["ode_horizon"], c["ode_step"], c["terminal"], c["ode_t0"])
    rho = solve_rho(prof, c["lambda"], c["ode_horizon"], c["ode_step"])
    chi = solve_chi(prof, mult, c["lambda"], s=float(mult.grid[0]), strict=False)
    res = riccati_residual(mult.grid, mult.r2, prof.a(mult.grid), prof.b(mult.grid), mult.step)
    stride = max(1, int(round(0.1 / mult.step)))
    sel = slice(0, None, stride)
    write_csv(out / "r1r2.csv", ("t", "r1", "r2", "k", "residual"),
              zip(mult.grid[sel], mult.r1[sel], mult.r2[sel], mult.k[sel], res[sel]))
    write_csv(out / "rho.csv", ("t", "rho", "rho_exp_ratio"),
              zip(rho.grid[sel], rho.rho[sel], rho.exp_ratio()[sel]))
    write_csv(out / "chi.csv", ("t", "chi1", "chi2", "lower1", "upper1", "lower2", "upper2"),
              zip(chi.grid[sel], chi.chi1[sel], chi.chi2[sel], chi.lower1[sel], chi.upper1[sel],
                  chi.lower2[sel], chi.upper2[sel]))
    print(f"l1_r1={mult.l1_r1:.10g}")
    print(f"l1_r2={mult.l1_r2:.10g}")
    print(f"c_r1r2={mult.c_r1r2:.10g}")
    print(f"r2_at_t0={mult.r2_at_0:.10g}")
    print(f"residual_max={mult.residual_max:.3g}")
    print(f"drho_at_0={rho.drho_at_0:.10g}")
    print(f"sandwich_ok={chi.sandwich_ok[0]},{chi.sandwich_ok[1]}")
    return EXIT_OK


def cmd_testfn(c, out: Path) -> int:
    n, lam = c["n"], c["lambda"]
    ev = PhiEvaluator(n)
    r = np.linspace(0.0, 50.0 / lam, 101)
    vals = ev(lam, r)
    env = ev.scaled(lam * r) * japanese(lam * r) ** ((n - 1) / 2.0)
    write_csv(out / "phi.csv", ("lambda", "r", "phi", "envelope_ratio"),
              zip(np.full(r.size, lam), r, vals, env))
    q = c["q"] if c["q"] is not None else (n - 1) / 2.0 - 1.0 / c["p"]
    kern = SpectralKernel(n, q, lambda0=lam, R=c["R0"], n_lambda=c["n_lambda"])
    audit = lemma41_audit(kern, np.linspace(0.0, c["t_max"], 26), n_r=c["n_r"])
    rows = []
    for k, v in audit.constants().items():
        wt, ws, wr = audit.worst.get(k, (math.nan, math.nan, math.nan))
        rows.append((k, v, wt, ws, wr))
    write_csv(out / "lemma41.csv", ("part", "fitted_constant", "worst_t", "worst_s", "worst_r"), rows)
    for k, v, *_ in rows:
        print(f"{k}={v:.10g}")
    return EXIT_OK


def cmd_solve(c, out: Path) -> int:
    prof = _profile(c)
    bump = InitialBump(c["R0"], c["m"], c["f_amp"], c["g_amp"], c["eps"])
    params = SolverParams(h=c["h"], cfl=c["cfl"], horizon=c["horizon"], M_blow=c["M_blow"],
                          sample_dt=c["sample_dt"], weights=c["weights"], lambda0=c["lambda"])
    rep = run(c["n"], c["p"], prof, bump, params, mode=c["mode"])
    tr = rep.traces
    cols = ("t", "G", "G1", "F", "Ftilde", "Lp", "sup_u", "support_r")
    write_csv(out / "trace.csv", cols, zip(*(tr[k] for k in cols)))
    T = rep.T_est if rep.blow_up else math.nan
    write_csv(out / "report.csv", ("blow_up", "T_est", "residual_G", "sensitivity"),
              [(rep.blow_up, T, rep.residual_G, rep.sensitivity)])
    print(f"blow_up={rep.blow_up} T_est={T:.6g} residual_G={rep.residual_G:.3g} sensitivity={rep.sensitivity:.3g}")
    return EXIT_OK


def cmd_iterate(c, out: Path) -> int:
    n, p = c["n"], c["p"]
    eps = c["eps"]
    if c["kind"] == "subcritical":
        seq = subcrit_sequences(p, n, c["c_r1r2"], c["C2"], j_max=c["j_max"], eps=eps)
        write_csv(out / "sequences.csv", ("j", "a_j", "b_j", "logD_j"), zip(seq.j, seq.a, seq.b, seq.logD))
        env = volterra_envelope_subcrit(c["C2"], eps, c["c_r1r2"], p, n, c["R0"],
                                        grid=geometric_grid(10.0 ** 8, c["grid_nodes"]),
                                        max_sweeps=c["max_sweeps"], raise_on_none=False)
        t = env.grid
    else:
        N = slicing_N(c["C_frame"], c["M"], p)
        seq = crit_sequences(p, c["C_frame"], j_max=c["j_max"], N=N, eps=eps)
        write_csv(out / "sequences.csv", ("j", "a_j", "b_j", "logC_j"), zip(seq.j, seq.a, seq.b, seq.logC))
        env = volterra_envelope_crit(c["M"], eps, c["C_frame"], p, sigma=log_grid(c["grid_max"], c["grid_nodes"]),
                                     max_sweeps=c["max_sweeps"], raise_on_none=False)
        t = env.grid  # log t
    rows = list(zip(t, env.values))
    T = env.divergence_time if env.diverged else math.nan
    rows.append(("divergence_time", T))
    write_csv(out / "envelope.csv", ("t" if c["kind"] == "subcritical" else "log_t", "value"), rows)
    print(f"{c['kind']} envelope: divergence_time={T:.6g} sweeps={env.sweeps_used}")
    if not env.diverged:
        log.error("envelope did not diverge on the grid")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(c, out: Path) -> int:
    if c["kind"] == "critical":
        rows = critical_sweep(c["eps_list"], c["p"], c["M"], c["C_frame"], c["grid_max"], c["grid_nodes"],
                              c["max_sweeps"])
        fit = fit_critical([r.eps for r in rows], [r.T_est for r in rows], c["p"]) if len(rows) >= 4 else None
        emit_outputs(rows, fit, out, kind="critical", p=c["p"])
        ok = True
    else:
        scfg = SweepConfig.from_dict(c)
        res = run_sweep(scfg)
        rows = res.rows
        fit = fit_subcritical(rows, ProblemIndex(scfg.n, scfg.p), scfg.tolerance) if len(rows) >= 4 else None
        emit_outputs(rows, fit, out, kind="subcritical", p=scfg.p)
        ok = res.ok
    for r in rows:
        print(f"eps={r.eps:.6g} T={r.T_est:.6g} converged={r.converged}")
    if fit is not None:
        print(f"slope={fit.slope:.4f} theory={fit.theory_slope:.4f} r2={fit.r_squared:.4f} "
              f"verdict={'pass' if fit.verdict else 'fail'}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"exponents": cmd_exponents, "ode": cmd_ode, "testfn": cmd_testfn, "solve": cmd_solve,
            "iterate": cmd_iterate, "sweep": cmd_sweep}
HELP = {
    "exponents": "Strauss/Fujita exponents, gamma and regime for (n, p)",
    "ode": "Riccati pair, rho and chi for a coefficient profile",
    "testfn": "eigenfunction table and fitted auxiliary-function constants",
    "solve": "one radial PDE run with traces and a lifespan estimate",
    "iterate": "iteration sequences and Volterra envelope divergence",
    "sweep": "eps sweep with lifespan scaling fit",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blowup-lab",
                                 description="Blow-up and lifespan experiments for damped semilinear waves.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", type=Path, help="flat key=value file")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        if name == "exponents":
            sp.add_argument("--n", type=str, help="dimension (shortcut for --set n=...)")
            sp.add_argument("--p", type=str, help="power, or 'strauss' (shortcut for --set p=...)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sets = list(args.set)
        for key in ("n", "p"):
            if getattr(args, key, None) is not None:
                sets.append(f"{key}={getattr(args, key)}")
        overrides = cfgmod.parse_text("\n".join(sets), "--set")
        c = cfgmod.load(args.config, overrides)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](c, args.out)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
