"""Config-driven experiment pipelines with CSV/JSON outputs.

A config is a JSON object validated against ``CONFIG_SCHEMA``. ``run`` fills
in defaults, dispatches on ``kind``, writes the tables and returns a
``RunManifest``. Tables depend only on the resolved config, never on the
worker count or wall clock; the manifest is the only file carrying timing.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from copy import deepcopy
from dataclasses import dataclass, field
from importlib import metadata

import jsonschema
import numpy as np

from . import effective as eff
from .covariance import CovarianceModel
from .errors import ConfigError, DomainError
from .field import (GridSpec, cov_rows, grid_site_samples, make_factory, synth_harmonic,
                    wick_four_point)
from .fk import InitialData, convergence_table, decreasing_within, table_header
from .numerics import RngStream
from .paths import PathEnsemble, PathSpec, SceneryRegime, block_split, default_dt, scenery_integral
from .spde import MollifierSpec, MomentSpec, cauchy_variance, limit_moment, moment_compare

__all__ = ["CONFIG_SCHEMA", "KINDS", "RunManifest", "resolve_config", "validate_config",
           "config_hash", "run", "emit", "read_table", "PIPELINES"]

KINDS = ("effective", "homogenize", "scenery", "corrector", "spde", "field_check")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_alpha = {"oneOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]}
_point = {"type": "array", "items": _num, "minItems": 1, "maxItems": 4}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "scenery-homog experiment config",
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gaussian_separable", "tapered_gaussian"]},
                "amplitude": _pos, "ell_t": _pos, "ell_x": _pos,
                "d": {"type": "integer", "minimum": 1, "maximum": 4},
                "taper_radius": {"oneOf": [_pos, {"type": "null"}]},
            },
        },
        "alpha": _alpha,
        "alphas": {"type": "array", "items": _alpha, "minItems": 1},
        "eps_schedule": {"type": "array", "items": _pos, "minItems": 1},
        "t": _pos,
        "x": _point,
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["cosine_wave", "gaussian_bump", "constant"]},
                "kappa": _point, "center": _point, "width": _pos, "c": _num,
            },
        },
        "backend": {"enum": ["harmonic", "hybrid", "zero"]},
        "backends": {"type": "array", "items": {"enum": ["harmonic", "hybrid", "grid"]}, "minItems": 1},
        "J": {"type": "integer", "minimum": 1},
        "budget": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 2},
                "n_fields": {"type": "integer", "minimum": 1},
                "n_realizations": {"type": "integer", "minimum": 0},
                "n_limit_tuples": {"type": "integer", "minimum": 2},
                "dt_factor": _pos,
                "dt_delta": {"type": "boolean"},
                "max_seconds": _pos,
            },
        },
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**63 - 1},
        "output": {"type": "string"},
        "lambdas": {"type": "array", "items": _pos, "minItems": 1},
        "gammas": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "moments": {"type": "array", "minItems": 1,
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                              "minItems": 2, "maxItems": 2}},
        "eps_moll": _pos,
        "lags": {"type": "array", "minItems": 1,
                 "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 5}},
        "sites": {"type": "array", "minItems": 4, "maxItems": 4,
                  "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 5}},
        "decomposition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": _pos, "alpha": {"type": "number", "minimum": 0, "maximum": 2},
                "dt": _pos, "refinements": {"type": "integer", "minimum": 1, "maximum": 6},
                "n_paths": {"type": "integer", "minimum": 2}, "J": {"type": "integer", "minimum": 1},
            },
        },
        "n_points": {"type": "integer", "minimum": 1},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "field_check"}}},
         "then": {"properties": {"budget": {"properties": {"n_realizations": {"minimum": 100}}}}}},
    ],
}

_MODEL = {"kind": "gaussian_separable", "amplitude": 1.0, "ell_t": 1.0, "ell_x": 1.0, "d": 3,
          "taper_radius": None}

_LAGS = [[0.5, 0, 0, 0], [1.0, 0, 0, 0], [2.0, 0, 0, 0], [0, 0.5, 0, 0], [0, 1.0, 0, 0],
         [0, 0, 2.0, 0], [0.5, 0.5, 0, 0], [1.0, 0, 1.0, 0], [0.5, 0.25, 0.25, 0.25], [0, 0, 0, 0]]

DEFAULTS = {
    "effective": {},
    "homogenize": {"alphas": [3, 2, 1], "eps_schedule": [0.5, 0.35, 0.25], "t": 1.0,
                   "initial": {"kind": "cosine_wave"}, "backend": "hybrid", "J": 8,
                   "budget": {"n_paths": 10000, "n_fields": 20, "dt_factor": 1.0, "dt_delta": False}},
    "scenery": {"alpha": 3, "eps_schedule": [0.4, 0.2, 0.1], "t": 1.0, "backend": "hybrid", "J": 4,
                "gammas": [0.4, 0.2], "budget": {"n_paths": 20000, "n_fields": 20}},
    "corrector": {"alpha": 1, "lambdas": [1e-1, 1e-2, 1e-3, 1e-4], "J": 64, "n_points": 50,
                  "decomposition": {"epsilon": 0.1, "alpha": 1, "dt": 0.25, "refinements": 3,
                                    "n_paths": 200, "J": 64}},
    "spde": {"eps_schedule": [0.2, 0.1, 0.05], "t": 1.0, "eps_moll": 1e-3,
             "moments": [[1, 0], [1, 1], [2, 0]], "initial": {"kind": "cosine_wave"},
             "backend": "hybrid", "J": 8,
             "budget": {"n_paths": 2000, "n_fields": 40, "n_limit_tuples": 20000}},
    "field_check": {"backends": ["harmonic", "grid"], "J": 64, "lags": _LAGS,
                    "sites": [[0, 0, 0, 0], [0.5, 0.25, 0, 0], [0.25, 0, 0.5, 0], [1.0, 0.25, 0.25, 0.25]],
                    "budget": {"n_realizations": 2000}},
}

# thresholds of the --check mode, one entry per criterion
RUNTIME = {"effective": 10.0, "corrector": 30.0 + 120.0, "field_check": 60.0, "scenery": 180.0,
           "homogenize": 600.0, "spde": 600.0}


def _merge(base, over):
    out = deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = deepcopy(v)
    return out


def validate_config(config: dict) -> None:
    """Raise ConfigError with the JSON pointer of the first violation."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: ([str(p) for p in e.absolute_path], e.message))
    if errors:
        err = errors[0]
        pointer = "".join(f"/{p}" for p in err.absolute_path)
        raise ConfigError(err.message, pointer or "/")


def resolve_config(config: dict, seed=None, output=None) -> dict:
    """Validated config with defaults filled in; flags override file values."""
    config = dict(config)
    if seed is not None:
        config["master_seed"] = int(seed)
    if output is not None:
        config["output"] = str(output)
    validate_config(config)
    kind = config["kind"]
    base = {"model": dict(_MODEL), "master_seed": 0, "output": "out"}
    resolved = _merge(_merge(base, DEFAULTS[kind]), config)
    model = resolved["model"]
    d = model["d"]
    if kind in ("homogenize", "spde"):
        resolved.setdefault("x", [0.0] * d)
        init = resolved.setdefault("initial", {"kind": "cosine_wave"})
        if init.get("kind", "cosine_wave") == "cosine_wave":
            init.setdefault("kappa", [1.0] + [0.0] * (d - 1))
        if len(resolved["x"]) != d:
            raise ConfigError(f"x has {len(resolved['x'])} entries, model has d={d}", "/x")
    if kind == "field_check":
        for key in ("lags", "sites"):
            resolved[key] = [list(p[:d + 1]) + [0.0] * max(0, d + 1 - len(p)) for p in resolved[key]]
    if model["kind"] == "tapered_gaussian" and model.get("taper_radius") is None:
        raise ConfigError("tapered_gaussian needs taper_radius", "/model/taper_radius")
    return resolved


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    """sha256 of the resolved config; ``output`` does not enter."""
    body = {k: v for k, v in resolved.items() if k != "output"}
    return hashlib.sha256(_canonical(body).encode()).hexdigest()


# ---------------------------------------------------------------------------
# serialization

def _float17(v: float) -> str:
    s = format(v, ".17g")
    # keep floats recognisable as floats after a round trip
    return s if any(c in s for c in ".en") else s + ".0"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return _float17(v)
    return str(v)


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return _float17(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def emit(rows, fmt: str, path, columns=None) -> str:
    """Write rows as CSV (header + one line per row) or a JSON array.

    Floats carry 17 significant digits, so re-parsed values are bit-equal.
    ``columns`` fixes the CSV header; keys outside it are left to JSON.
    """
    rows = list(rows)
    if not rows:
        raise DomainError("emit needs at least one row")
    path = os.fspath(path)
    try:
        if fmt == "csv":
            cols = list(columns) if columns else list(rows[0])
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for r in rows:
                    w.writerow([_fmt(r[c]) for c in cols])
        elif fmt == "json":
            with open(path, "w") as fh:
                fh.write("[\n" + ",\n".join(_json_value(r) for r in rows) + "\n]\n")
        else:
            raise DomainError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def _parse(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(path):
    """Rows of a CSV or JSON table written by ``emit``."""
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# pipelines: each returns (tables, checks); tables maps a name to
# (rows, csv columns or None), checks is a list of dicts

def _check(name, passed, reason, **values):
    return {"check": name, "passed": bool(passed), "reason": reason, **values}


def _model(cfg) -> CovarianceModel:
    return CovarianceModel.from_dict(cfg["model"])


def _alpha(a) -> float:
    return math.inf if a == "inf" else float(a)


def trapezoid_eq2_oracle(model: CovarianceModel, n: int = 400000) -> float:
    """ρ(EQ2) of a separable model by the trapezoid rule after t = u²/(1 − u)².

    Independent of the adaptive quadrature used by ``effective.rho``.
    """
    u = np.linspace(0.0, 1.0, n + 1)[:-1]
    t = (u / (1 - u)) ** 2
    jac = 2 * u / (1 - u) ** 3
    g = model.heat_average(t) * jac
    h = 1.0 / n
    return float(h * (g.sum() - 0.5 * g[0]))


def run_effective(cfg, workers=None):
    model = _model(cfg)
    rows, checks = [], []
    t0 = time.perf_counter()
    for regime in eff.REGIMES:
        c = eff.rho(model, regime)
        spectral = math.nan
        if regime != "G2" and (regime == "EQ2" or model.d >= 3):
            spectral = eff.sigma2_spectral(model, regime)
        rows.append({"regime": regime, "rho": c.rho, "sigma2": c.sigma2, "rho_error": c.rho_error,
                     "n_evals": c.n_evals, "sigma2_spectral": spectral,
                     "route_rel_diff": abs(c.sigma2 - spectral) / c.sigma2 if spectral == spectral else math.nan})
    elapsed = time.perf_counter() - t0
    by = {r["regime"]: r for r in rows}
    if model.separable:
        a = model.amplitude
        g2 = a * model.ell_t * math.sqrt(math.pi / 2)
        checks.append(_check("rho_G2_closed_form", abs(by["G2"]["rho"] - g2) <= 1e-8 * g2,
                             "|rho(G2) - A l_t sqrt(pi/2)| <= 1e-8 rel", value=by["G2"]["rho"], oracle=g2))
        if model.d >= 3:
            lt2 = a * model.ell_x**2 / (model.d / 2 - 1)
            checks.append(_check("rho_LT2_closed_form", abs(by["LT2"]["rho"] - lt2) <= 1e-8 * lt2,
                                 "|rho(LT2) - A l_x^2/(d/2-1)| <= 1e-8 rel", value=by["LT2"]["rho"], oracle=lt2))
        eq2 = trapezoid_eq2_oracle(model)
        checks.append(_check("rho_EQ2_trapezoid", abs(by["EQ2"]["rho"] - eq2) <= 1e-6 * eq2,
                             "|rho(EQ2) - trapezoid oracle| <= 1e-6 rel", value=by["EQ2"]["rho"], oracle=eq2))
    for regime in ("EQ2", "LT2"):
        diff = by[regime]["route_rel_diff"]
        if diff == diff:
            checks.append(_check(f"two_route_{regime}", diff <= 1e-6, "|2 rho - sigma2_spectral| <= 1e-6 rel",
                                 value=diff))
    checks.append(_check("runtime", elapsed < RUNTIME["effective"], f"< {RUNTIME['effective']} s", value=elapsed))
    return {"effective": (rows, None)}, checks


def run_homogenize(cfg, workers=None):
    model = _model(cfg)
    f = InitialData.from_dict(cfg["initial"], model.d)
    b = cfg["budget"]
    factory = make_factory(cfg["backend"], cfg["J"])
    rows, checks = [], []
    t0 = time.perf_counter()
    for k, a in enumerate(cfg["alphas"]):
        alpha = _alpha(a)
        if math.isinf(alpha):
            raise ConfigError("homogenize needs finite alpha; use kind=spde for alpha=inf", f"/alphas/{k}")
        tab = convergence_table(factory, model, f, alpha, cfg["eps_schedule"], cfg["t"], cfg["x"],
                                b["n_paths"], b["n_fields"], cfg["master_seed"] + k, b["dt_factor"],
                                b["dt_delta"], workers)
        rows.extend(tab)
        err = [r["abs_err"] for r in tab]
        se = [math.hypot(r["re_stderr"], r["im_stderr"]) for r in tab]
        checks.append(_check(f"decreasing_alpha_{a}", decreasing_within(err, se),
                             "|u_eps - u0| decreasing across eps up to 3 stderr", abs_err=err, stderr=se))
    elapsed = time.perf_counter() - t0
    checks.append(_check("runtime", elapsed < RUNTIME["homogenize"], f"< {RUNTIME['homogenize']} s", value=elapsed))
    return {"homogenize": (rows, table_header(model.d))}, checks


def scenery_sampler(factory, model, regime, dt, n_steps, stream):
    """Field realization covering the scenery integrand's time arguments."""
    a = regime.time_scale
    return factory(model, (0.5 * a * dt, a * dt, n_steps), stream)


def run_scenery(cfg, workers=None):
    model = _model(cfg)
    alpha = _alpha(cfg["alpha"])
    b = cfg["budget"]
    factory = make_factory(cfg["backend"], cfg["J"])
    root = RngStream(cfg["master_seed"])
    t = cfg["t"]
    g1, g2 = cfg["gammas"]
    rows, checks = [], []
    t0 = time.perf_counter()
    if math.isinf(alpha):
        tag = "INF"
    else:
        tag = "G2" if alpha > 2 else "LE2"
    sigma2 = None
    if tag != "INF":
        sigma2 = eff.rho(model, "G2" if tag == "G2" else eff.regime_for_alpha(alpha)).sigma2
    for i, eps in enumerate(cfg["eps_schedule"]):
        regime = SceneryRegime(tag, alpha, eps)
        dt = default_dt(regime, model, t)
        n = int(round(regime.horizon(t) / dt))
        second, block = [], []
        for j in range(b["n_fields"]):
            sampler = scenery_sampler(factory, model, regime, dt, n, root.child(i, j, 0))
            paths = PathEnsemble(PathSpec(model.d, regime.horizon(t), dt, b["n_paths"], root.child(i, j, 1)))
            if tag == "G2":
                split = block_split(sampler, paths, regime, g1, g2, t, workers)
                x = split.total
                block.append(np.mean(split.II**2) + np.mean(split.III**2))
            else:
                x = scenery_integral(sampler, paths, regime, t, workers).values
            second.append(np.mean(x * x))
        second = np.asarray(second)
        var = float(second.mean())
        se = float(second.std(ddof=1) / math.sqrt(second.size)) if second.size > 1 else math.nan
        row = {"epsilon": eps, "alpha": alpha, "t": t, "var": var, "var_stderr": se,
               "sigma2_t": sigma2 * t if sigma2 else math.nan,
               "abs_dev": abs(var - sigma2 * t) if sigma2 else math.nan,
               "n_paths": b["n_paths"], "n_fields": b["n_fields"], "master_seed": cfg["master_seed"], "dt": dt}
        if block:
            blk = np.asarray(block)
            row.update({"block_diag": float(blk.mean()),
                        "block_diag_stderr": float(blk.std(ddof=1) / math.sqrt(blk.size)) if blk.size > 1 else math.nan,
                        "gamma1": g1, "gamma2": g2, "gamma1_exceeds_half": g1 >= 0.5})
        rows.append(row)
    elapsed = time.perf_counter() - t0
    if sigma2:
        last, first = rows[-1], rows[0]
        checks.append(_check("var_within_3_stderr", last["abs_dev"] <= 3 * last["var_stderr"],
                             "|Var X - sigma2 t| <= 3 stderr at the smallest eps",
                             abs_dev=last["abs_dev"], stderr=last["var_stderr"]))
        checks.append(_check("var_deviation_shrinks", last["abs_dev"] < first["abs_dev"],
                             "deviation at the smallest eps below that at the largest",
                             first=first["abs_dev"], last=last["abs_dev"]))
    if tag == "G2":
        diag = [r["block_diag"] for r in rows]
        checks.append(_check("block_diag_decreasing", all(q < p for p, q in zip(diag, diag[1:])),
                             "E[II^2] + E[III^2] strictly decreasing as eps halves", values=diag))
    checks.append(_check("runtime", elapsed < RUNTIME["scenery"], f"< {RUNTIME['scenery']} s", value=elapsed))
    return {"scenery": (rows, None)}, checks


def run_corrector(cfg, workers=None):
    model = _model(cfg)
    alpha = float(cfg["alpha"])
    root = RngStream(cfg["master_seed"])
    sigma2 = eff.rho(model, eff.regime_for_alpha(alpha)).sigma2
    checks = []
    t0 = time.perf_counter()
    scan = []
    for lam in cfg["lambdas"]:
        spec = eff.CorrectorSpec(math.sqrt(lam), alpha, lam)
        scan.append({"lambda": lam, "epsilon": spec.epsilon, "alpha": alpha,
                     "sigma2_lambda": eff.sigma2_lambda(model, spec),
                     "corrector_norm": eff.corrector_norm(model, spec), "sigma2": sigma2})
    t_scan = time.perf_counter() - t0
    norms = [r["corrector_norm"] for r in scan]
    s2 = [r["sigma2_lambda"] for r in scan]
    checks.append(_check("corrector_norm_decreasing", all(q < p for p, q in zip(norms, norms[1:])),
                         "lambda<Phi,Phi> strictly decreasing", values=norms))
    checks.append(_check("corrector_norm_small", norms[-1] < 0.05 * norms[0], "final < 0.05 x initial",
                         ratio=norms[-1] / norms[0]))
    checks.append(_check("sigma2_lambda_increasing", all(q > p for p, q in zip(s2, s2[1:])) and s2[-1] < sigma2,
                         "sigma2_lambda strictly increasing toward sigma2", values=s2))
    gap = (sigma2 - s2[-1]) / sigma2
    checks.append(_check("sigma2_lambda_gap", gap < 0.02, "sigma2 - sigma2_lambda < 0.02 sigma2 at the last lambda",
                         value=gap))
    checks.append(_check("scan_runtime", t_scan < 30.0, "< 30 s", value=t_scan))

    # exactness on a harmonic field
    fld = synth_harmonic(model, cfg["J"], root.child(0))
    gen = root.child(1).generator()
    npts = cfg["n_points"]
    tt = gen.uniform(-5, 5, npts)
    xx = gen.uniform(-5, 5, (npts, model.d))
    dspec = cfg["decomposition"]
    cspec = eff.CorrectorSpec(dspec["epsilon"], dspec["alpha"])
    resid = float(np.max(np.abs(eff.corrector_residual(fld, cspec, tt, xx))))
    _, grad = eff.corrector_eval(fld, cspec, tt, xx)
    h = 1e-4
    fd = np.empty_like(grad)
    for k in range(model.d):
        e = np.zeros(model.d)
        e[k] = h
        fd[:, k] = (eff.corrector_eval(fld, cspec, tt, xx + e)[0] - eff.corrector_eval(fld, cspec, tt, xx - e)[0]) / (2 * h)
    fd_err = float(np.max(np.abs(grad - fd)))
    exact = [{"n_points": npts, "J": cfg["J"], "max_residual": resid, "max_fd_error": fd_err, "h": h}]
    checks.append(_check("residual", resid < 1e-10, "max |(lambda - L)Phi - V| < 1e-10", value=resid))
    checks.append(_check("gradient_fd", fd_err < 1e-4, "max |D Phi - central difference| < 1e-4", value=fd_err))

    # martingale decomposition under dt refinement
    t1 = time.perf_counter()
    dfld = synth_harmonic(model, dspec["J"], root.child(2))
    levels = dspec["refinements"] + 1
    fine = dspec["dt"] / 2 ** dspec["refinements"]
    regime = SceneryRegime("LE2", cspec.alpha, cspec.epsilon)
    paths = PathEnsemble(PathSpec(model.d, regime.horizon(1.0), fine, dspec["n_paths"], root.child(3)))
    norm = eff.corrector_norm(model, cspec)
    decomp = []
    for lev in range(levels):
        view = paths.coarsen(2 ** (levels - 1 - lev))
        res = eff.martingale_decompose(dfld, view, cspec, 1.0, workers)
        decomp.append({"dt": view.dt, "residual_rms": float(np.sqrt(np.mean(res.residual**2))),
                       "E_R2": float(np.mean(res.R_term**2)), "bound": 10 * norm * 2.0,
                       "E_X2": float(np.mean(res.X**2)), "qv_sum": float(np.mean(res.qv.sum(axis=1))),
                       "sigma2_lambda": eff.sigma2_lambda(model, cspec),
                       "n_paths": dspec["n_paths"], "epsilon": cspec.epsilon, "alpha": cspec.alpha})
    t_dec = time.perf_counter() - t1
    rms = [r["residual_rms"] for r in decomp]
    ratios = [p / q for p, q in zip(rms, rms[1:])]
    checks.append(_check("residual_order", all(1.3 <= r <= 3.0 for r in ratios),
                         "residual RMS ratio per dt halving in [1.3, 3]", ratios=ratios))
    er2 = decomp[-1]["E_R2"]
    checks.append(_check("remainder_bound", er2 <= decomp[-1]["bound"],
                         "E|R|^2 <= 10 lambda<Phi,Phi> (1 + t)", value=er2, bound=decomp[-1]["bound"]))
    checks.append(_check("decomposition_runtime", t_dec < 120.0, "< 2 min", value=t_dec))
    return {"corrector_scan": (scan, None), "corrector_exactness": (exact, None),
            "decomposition": (decomp, None)}, checks


def run_spde(cfg, workers=None):
    model = _model(cfg)
    f = InitialData.from_dict(cfg["initial"], model.d)
    b = cfg["budget"]
    root = RngStream(cfg["master_seed"])
    t = cfg["t"]
    checks = []
    t0 = time.perf_counter()
    r0t = float(model.time_integral(0.0)) * t
    ms = MollifierSpec(cfg["eps_moll"])
    cv = cauchy_variance(model, ms, np.zeros((int(round(t / min(cfg["eps_moll"], 1e-3))) + 1, model.d)), t)
    cauchy = [{"eps_moll": cfg["eps_moll"], "t": t, "cauchy_variance": cv, "R0_t": r0t,
               "rel_err": abs(cv - r0t) / r0t}]
    checks.append(_check("cauchy_variance", abs(cv - r0t) <= 0.02 * r0t, "within 2% of R(0) t (zero path)",
                         value=cv, oracle=r0t))
    one = InitialData("constant", c=1.0)
    lm = limit_moment(model, one, MomentSpec(1, 0, b["n_limit_tuples"], t, tuple(cfg["x"]), root.child(7)))
    target = math.exp(-0.5 * r0t)
    floor = 1e-12 * target
    checks.append(_check("limit_moment_1_0", abs(lm.mean - target) <= max(3 * abs(lm.stderr), floor),
                         "limit_moment(1,0; f=1) = exp(-R(0) t / 2) within 3 stderr (machine floor)",
                         value=lm.mean.real, oracle=target))
    rows = moment_compare(make_factory(cfg["backend"], cfg["J"]), model, f, cfg["moments"], cfg["eps_schedule"],
                          t, cfg["x"], b["n_paths"], b["n_fields"], cfg["master_seed"], b["n_limit_tuples"],
                          workers)
    for n1, n2 in cfg["moments"]:
        sub = [r for r in rows if (r["N1"], r["N2"]) == (n1, n2)]
        err = [r["abs_err"] for r in sub]
        se = [math.hypot(math.hypot(r["re_stderr"], r["im_stderr"]), r["limit_stderr"]) for r in sub]
        checks.append(_check(f"moment_{n1}_{n2}_decreasing", decreasing_within(err, se),
                             "|moment_eps - limit| decreasing across eps up to 3 stderr", abs_err=err, stderr=se))
    elapsed = time.perf_counter() - t0
    checks.append(_check("runtime", elapsed < RUNTIME["spde"], f"< {RUNTIME['spde']} s", value=elapsed))
    header = table_header(model.d, ("N1", "N2"))
    return {"spde_moments": (rows, header), "spde_cauchy": (cauchy, None)}, checks


def run_field_check(cfg, workers=None):
    model = _model(cfg)
    d = model.d
    n = cfg["budget"]["n_realizations"]
    if n < 100:
        raise ConfigError("field_check needs n_realizations >= 100", "/budget/n_realizations")
    root = RngStream(cfg["master_seed"])
    lags = [(p[0], np.asarray(p[1:], dtype=float)) for p in cfg["lags"]]
    pts_t = np.array([0.0] + [lt for lt, _ in lags])
    pts_x = np.stack([np.zeros(d)] + [lx for _, lx in lags])
    sites = np.asarray(cfg["sites"], dtype=float)
    rows, wick_rows, checks = [], [], []
    t0 = time.perf_counter()
    for k, backend in enumerate(cfg["backends"]):
        stream = root.child(k)
        all_t = np.concatenate([pts_t, sites[:, 0]])
        all_x = np.concatenate([pts_x, sites[:, 1:]])
        if backend == "grid":
            grid = GridSpec(32, 32, 0.25 * model.ell_t, 0.25 * model.ell_x, d)
            vals = grid_site_samples(model, grid, all_t, all_x, n, stream)
        else:
            factory = make_factory(backend, cfg["J"])
            span = float(np.max(np.abs(all_t))) + 1.0
            vals = np.empty((n, all_t.size))
            for i in range(n):
                sampler = factory(model, (-span, 2 * span / 64, 65), stream.child(i))
                vals[i] = sampler(all_t, all_x)
        cov = cov_rows(vals[:, :len(lags) + 1], lags)
        ok = True
        for lt, lx, est, se in cov:
            target = float(model(lt, lx))
            z = abs(est - target) / se if se > 0 else math.inf
            ok &= z <= 3.0
            row = {"backend": backend, "lag_t": lt}
            row.update({f"lag_x{a + 1}": v for a, v in enumerate(lx)})
            row.update({"estimate": est, "stderr": se, "target": target, "z": z, "n_realizations": n})
            rows.append(row)
        checks.append(_check(f"cov_{backend}", ok, "covariance at every lag within 3 stderr"))
        if backend == "grid":
            s = vals[:, len(lags) + 1:]
            cmat = np.array([[float(model(sites[i, 0] - sites[j, 0], sites[i, 1:] - sites[j, 1:]))
                              for j in range(4)] for i in range(4)])
            est, se, wick = wick_four_point(s, cmat)
            wick_rows.append({"backend": backend, "estimate": est, "stderr": se, "wick": wick,
                              "z": abs(est - wick) / se, "n_realizations": n})
            checks.append(_check("wick_grid", abs(est - wick) <= 3 * se, "four-point moment within 3 stderr of Wick",
                                 estimate=est, wick=wick, stderr=se))
    elapsed = time.perf_counter() - t0
    checks.append(_check("runtime", elapsed < RUNTIME["field_check"], f"< {RUNTIME['field_check']} s", value=elapsed))
    tables = {"field_cov": (rows, None)}
    if wick_rows:
        tables["field_wick"] = (wick_rows, None)
    return tables, checks


PIPELINES = {"effective": run_effective, "homogenize": run_homogenize, "scenery": run_scenery,
             "corrector": run_corrector, "spde": run_spde, "field_check": run_field_check}


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_clock: float
    files: list
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "version": self.version, "wall_clock": self.wall_clock,
                "files": self.files, "checks": self.checks, "passed": self.passed, "config": self.config}


def _version() -> str:
    for name in ("scenery-homog", "artifact"):
        try:
            return metadata.version(name)
        except metadata.PackageNotFoundError:
            continue
    return "0+unknown"


def _strip_timing(checks):
    # timings differ run to run; they stay in the manifest only
    return [c for c in checks if not c["check"].endswith("runtime")]


def run(config: dict, out_dir=None, workers=None, seed=None) -> RunManifest:
    """Resolve, run and write one experiment; returns its manifest."""
    cfg = resolve_config(config, seed=seed, output=out_dir)
    out = cfg["output"]
    os.makedirs(out, exist_ok=True)
    start = time.perf_counter()
    tables, checks = PIPELINES[cfg["kind"]](cfg, workers)
    wall = time.perf_counter() - start
    files = []
    for name, (rows, cols) in tables.items():
        files.append(emit(rows, "csv", os.path.join(out, f"{name}.csv"), cols))
        files.append(emit(rows, "json", os.path.join(out, f"{name}.json")))
    results = {"config": cfg, "config_hash": config_hash(cfg), "checks": _strip_timing(checks)}
    with open(os.path.join(out, "results.json"), "w") as fh:
        fh.write(_json_value(results) + "\n")
    files.append(os.path.join(out, "results.json"))
    manifest = RunManifest(config_hash(cfg), _version(), wall, [os.path.basename(p) for p in files], checks, cfg)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        fh.write(_json_value(manifest.to_dict()) + "\n")
    return manifest
