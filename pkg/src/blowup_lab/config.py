"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Every key must appear in
``SCHEMA``; unknown keys, duplicates and unparsable values raise ``ConfigError``.
"""
from __future__ import annotations

import math
from pathlib import Path

from .exponents import strauss_exponent


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _power(s: str):
    v = s.strip().lower()
    if v in ("strauss", "critical"):
        return "strauss"
    return float(v)


def _choice(*opts):
    def parse(s):
        v = s.strip().lower()
        if v not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return v
    return parse


def _float_list(s: str):
    return [float(x) for x in s.replace(",", " ").split()]


# key -> (parser, default)
SCHEMA = {
    # problem
    "n": (int, 3),
    "p": (_power, 2.0),
    # coefficient profile a = mu/(1+t)^beta, b = mu2/(1+t)^(alpha_m+1)
    "mu": (float, 2.0),
    "beta": (float, 2.0),
    "mu2": (float, 1.0),
    "alpha_m": (float, 1.5),
    # multiplier ODEs
    "lambda": (float, 0.5),
    "ode_horizon": (float, 200.0),
    "ode_step": (float, 1e-3),
    "ode_t0": (float, 0.0),
    "terminal": (_choice("farfield", "zero"), "farfield"),
    # data
    "eps": (float, 0.5),
    "R0": (float, 1.0),
    "m": (int, 3),
    "f_amp": (float, 20.0),
    "g_amp": (float, 20.0),
    # solver
    "h": (float, 0.05),
    "cfl": (float, 1.0),
    "horizon": (float, 100.0),
    "M_blow": (float, 1e6),
    "mode": (_choice("free", "theorem"), "free"),
    "sample_dt": (float, 0.5),
    "weights": (_bool, False),
    "levels": (int, 2),
    "refine_tol": (float, 0.05),
    # sweep
    "eps_list": (_float_list, None),
    "eps_max": (float, 0.4),
    "eps_ratio": (float, 2.0),
    "eps_count": (int, 5),
    "horizon_max": (float, 40000.0),
    "workers": (int, 1),
    "tolerance": (float, 0.2),
    "kind": (_choice("subcritical", "critical"), "subcritical"),
    # iteration
    "C2": (float, 1.0),
    "c_r1r2": (float, 1.0),
    "C_frame": (float, 10.0),
    "M": (float, 5.0),
    "j_max": (int, 30),
    "max_sweeps": (int, 5000),
    "grid_nodes": (int, 3000),
    "grid_max": (float, 690.0),
    # test functions
    "q": (float, None),
    "n_lambda": (int, 128),
    "n_r": (int, 41),
    "t_max": (float, 50.0),
}


def defaults() -> dict:
    return {k: d for k, (_, d) in SCHEMA.items()}


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return out


def load(path: str | Path | None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then ``overrides`` (already parsed values)."""
    cfg = defaults()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from None
        cfg.update(parse_text(text, str(p)))
    for k, v in (overrides or {}).items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown key {k!r}")
        cfg[k] = v
    return resolve(cfg)


def resolve(cfg: dict) -> dict:
    """Fill derived values (``p = strauss``, the eps ladder) and check ranges."""
    cfg = dict(cfg)
    if cfg["n"] < 2:
        raise ConfigError("n must be >= 2")
    if cfg["p"] == "strauss":
        cfg["p"] = strauss_exponent(cfg["n"])
    if not (cfg["p"] > 1 and math.isfinite(cfg["p"])):
        raise ConfigError("p must be a finite real > 1")
    if cfg["eps_list"] is None:
        if cfg["eps_count"] < 1 or cfg["eps_ratio"] <= 1:
            raise ConfigError("eps ladder needs eps_count >= 1 and eps_ratio > 1")
        cfg["eps_list"] = [cfg["eps_max"] / cfg["eps_ratio"] ** j for j in range(cfg["eps_count"])]
    eps = cfg["eps_list"]
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps ladder must be positive and strictly decreasing")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if cfg["levels"] < 1:
        raise ConfigError("levels must be >= 1")
    return cfg
