"""Feynman-Kac Monte Carlo for u_ε and the homogenized solution u_0.

u_ε(t, x) = E_B f(x + B_t) exp(i ε^{−δ} ∫_0^t V(s/ε^α, (x + B_s)/ε) ds),

δ = α/2 ∨ 1. For α = ∞ the potential is ε^{−1/2} V(t/ε, x) and the phase is
ε^{−1/2} ∫_0^t V(s/ε, x + B_s) ds. The time integral uses the midpoint rule
on the piecewise-linear path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel
from .effective import regime_for_alpha, rho
from .errors import DomainError
from .numerics import RngStream
from .parallel import pmap
from .paths import PathEnsemble, PathSpec, midpoints

__all__ = [
    "InitialData",
    "SolveSpec",
    "MonteCarloEstimate",
    "heat_semigroup",
    "default_fk_dt",
    "time_lattice",
    "fk_values",
    "solve_u_eps",
    "solve_u0",
    "convergence_table",
    "TABLE_COLUMNS",
    "table_header",
    "decreasing_within",
]


@dataclass(frozen=True)
class InitialData:
    """Real bounded initial condition."""

    kind: str = "cosine_wave"
    kappa: tuple = (1.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cosine_wave", "gaussian_bump", "constant"):
            raise DomainError(f"unknown initial data kind {self.kind!r}")
        if self.kind == "gaussian_bump" and not self.width > 0:
            raise DomainError("bump width must be > 0")

    @classmethod
    def from_dict(cls, obj: dict, d: int = 3) -> "InitialData":
        kind = obj.get("kind", "cosine_wave")
        zero = (0.0,) * d
        unit = (1.0,) + (0.0,) * (d - 1)
        return cls(kind, tuple(obj.get("kappa", unit)), tuple(obj.get("center", zero)),
                   float(obj.get("width", 1.0)), float(obj.get("c", 1.0)))

    def to_dict(self) -> dict:
        if self.kind == "cosine_wave":
            return {"kind": self.kind, "kappa": list(self.kappa)}
        if self.kind == "gaussian_bump":
            return {"kind": self.kind, "center": list(self.center), "width": self.width}
        return {"kind": self.kind, "c": self.c}

    @property
    def sup_abs(self) -> float:
        return abs(self.c) if self.kind == "constant" else 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "cosine_wave":
            return np.cos(x @ np.asarray(self.kappa, dtype=float))
        if self.kind == "gaussian_bump":
            r2 = np.sum((x - np.asarray(self.center, dtype=float)) ** 2, axis=-1)
            return np.exp(-0.5 * r2 / self.width**2)
        return np.full(x.shape[:-1], self.c)


def heat_semigroup(f: InitialData, t: float, x) -> float:
    """E f(x + B_t) in closed form."""
    if t < 0:
        raise DomainError("t must be >= 0")
    x = np.asarray(x, dtype=float)
    if f.kind == "cosine_wave":
        kap = np.asarray(f.kappa, dtype=float)
        return float(math.exp(-0.5 * float(kap @ kap) * t) * math.cos(float(kap @ x)))
    if f.kind == "gaussian_bump":
        w2 = f.width**2
        d = x.size
        r2 = float(np.sum((x - np.asarray(f.center, dtype=float)) ** 2))
        return float((w2 / (w2 + t)) ** (d / 2) * math.exp(-0.5 * r2 / (w2 + t)))
    return float(f.c)


@dataclass(frozen=True)
class SolveSpec:
    epsilon: float
    alpha: float
    t: float
    x: tuple
    n_paths: int
    stream: RngStream
    dt: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0 or not self.t > 0:
            raise DomainError("need epsilon > 0 and t > 0")
        if not (self.alpha >= 0):
            raise DomainError("alpha must be >= 0 or inf")

    @property
    def infinite(self) -> bool:
        return math.isinf(self.alpha)

    @property
    def delta(self) -> float:
        return 0.5 if self.infinite else max(self.alpha / 2.0, 1.0)

    @property
    def time_scale(self) -> float:
        """Macroscopic time per unit of the field's time argument."""
        return self.epsilon if self.infinite else self.epsilon**self.alpha

    @property
    def space_scale(self) -> float:
        return 1.0 if self.infinite else self.epsilon

    @property
    def d(self) -> int:
        return len(self.x)


def default_fk_dt(spec: SolveSpec, model: CovarianceModel | None = None) -> float:
    """An eighth of the fastest time scale of the potential, dividing t."""
    ell_t = model.ell_t if model else 1.0
    ell_x = model.ell_x if model else 1.0
    dt = min(ell_t * spec.time_scale, (ell_x * spec.space_scale) ** 2) / 8.0
    return spec.t / math.ceil(spec.t / dt - 1e-9)


def time_lattice(spec: SolveSpec, dt: float, refine: bool = False):
    """(tau0, dtau, n_tau) covering the field times visited by the midpoint rule.

    With ``refine`` the lattice also covers the midpoints of the dt/2 grid.
    """
    n = int(round(spec.t / dt))
    h = dt / spec.time_scale
    if refine:
        return 0.25 * h, 0.25 * h, 4 * n
    return 0.5 * h, h, n


@dataclass
class MonteCarloEstimate:
    mean: complex
    stderr: complex          # re/im standard errors in the real/imaginary parts
    n_paths: int
    seed: dict
    values: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, values, seed, meta=None):
        values = np.asarray(values, dtype=complex)
        n = values.size
        se = complex(values.real.std(ddof=1), values.imag.std(ddof=1)) / math.sqrt(n) if n > 1 else 0j
        return cls(complex(values.mean()), se, n, seed, values, meta or {})


def _fk_block(sampler, f, spec, paths, b, n, strides):
    x = np.asarray(spec.x, dtype=float)
    amp = spec.epsilon ** (-spec.delta)
    out = []
    for stride in strides:
        view = PathEnsemble(paths.spec, paths.stride * stride)
        dt = view.dt
        phase = np.zeros(view.block_rows(b))
        last = None
        for start, pos in view.chunks(b, n // stride):
            mid = midpoints(pos)
            times = (start + np.arange(mid.shape[1]) + 0.5) * dt / spec.time_scale
            phase += sampler(times[None, :], (x + mid) / spec.space_scale).sum(axis=1)
            last = pos[:, -1]
        out.append(f(x + last) * np.exp(1j * amp * dt * phase))
    return out


def fk_values(sampler, f: InitialData, spec: SolveSpec, model=None, workers=None, refine=False):
    """Per-path integrands f(x + B_t) e^{iθ} on the step ``spec.dt``.

    Returns (values, dt) or, with ``refine``, ((values, values at dt/2), dt)
    where both levels use the same Brownian paths.
    """
    dt = spec.dt or default_fk_dt(spec, model or getattr(sampler, "model", None))
    n = int(round(spec.t / dt))
    if abs(n * dt - spec.t) > 1e-9 * spec.t:
        raise DomainError("dt must divide t")
    if sampler.d != spec.d:
        raise DomainError(f"field dimension {sampler.d} does not match point dimension {spec.d}")
    split = 2 if refine else 1
    pspec = PathSpec(spec.d, spec.t, dt / split, spec.n_paths, spec.stream)
    paths = PathEnsemble(pspec)
    strides = (2, 1) if refine else (1,)
    parts = pmap(_fk_block, [(sampler, f, spec, paths, b, n * split, strides)
                             for b in range(pspec.n_blocks)], workers)
    vals = [np.concatenate([p[i] for p in parts]) for i in range(len(strides))]
    return (tuple(vals) if refine else vals[0]), dt


def solve_u_eps(sampler, f: InitialData, spec: SolveSpec, model=None, workers=None) -> MonteCarloEstimate:
    """Monte Carlo estimate of u_ε(t, x) on one field realization."""
    model = model or getattr(sampler, "model", None)
    vals, dt = fk_values(sampler, f, spec, model, workers)
    meta = {"dt": dt, "delta": spec.delta}
    ref = default_fk_dt(spec, model)
    if dt > 8 * ref:
        meta["warning"] = f"dt={dt:.3g} is more than 8x the default {ref:.3g}"
    seed = {"master_seed": spec.stream.master_seed, "stream_id": spec.stream.stream_id}
    return MonteCarloEstimate.from_values(vals, seed, meta)


def solve_u0(model: CovarianceModel, f: InitialData, t: float, x, regime) -> float:
    """e^{−ρ t} times the heat semigroup; ``regime`` is a tag or an α value."""
    if not isinstance(regime, str):
        regime = regime_for_alpha(float(regime))
    if t == 0:
        return float(f(np.asarray(x, dtype=float)))
    return math.exp(-rho(model, regime).rho * t) * heat_semigroup(f, t, x)


TABLE_COLUMNS = ["epsilon", "alpha", "t", "x", "re_mean", "im_mean", "re_stderr", "im_stderr",
                 "u0_ref", "abs_err", "n_paths", "n_fields", "master_seed"]


def table_header(d: int, extra=()):
    cols = []
    for c in TABLE_COLUMNS:
        cols.extend([f"x{i + 1}" for i in range(d)] if c == "x" else [c])
    return cols[:cols.index("re_mean")] + list(extra) + cols[cols.index("re_mean"):]


def _field_stats(means):
    means = np.asarray(means, dtype=complex)
    n = means.size
    mean = complex(means.mean())
    if n > 1:
        se = complex(means.real.std(ddof=1), means.imag.std(ddof=1)) / math.sqrt(n)
    else:
        se = 0j
    return mean, se


def convergence_table(factory, model: CovarianceModel, f: InitialData, alpha: float, eps_schedule,
                      t: float = 1.0, x=None, n_paths: int = 1000, n_fields: int = 1,
                      master_seed: int = 0, dt_factor: float = 1.0, dt_delta: bool = False,
                      workers=None, u0=None):
    """Rows of (ε, estimate, stderr, |estimate − u_0|, u_0) over a decreasing ε schedule.

    Each ε gets ``n_fields`` independent field realizations, each averaged
    over its own path ensemble; the reported stderr is the spread of the
    per-field means, so it contains both the environment and the path noise.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if len(eps_schedule) < 2 or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise DomainError("eps_schedule must be strictly decreasing with length >= 2")
    x = tuple(float(v) for v in (x if x is not None else (0.0,) * model.d))
    if u0 is None and not math.isinf(alpha):
        u0 = solve_u0(model, f, t, x, alpha)
    root = RngStream(master_seed)
    rows = []
    for i, eps in enumerate(eps_schedule):
        probe = SolveSpec(eps, alpha, t, x, n_paths, root)
        dt = default_fk_dt(probe, model) * dt_factor
        dt = t / max(1, round(t / dt))
        means, means_fine, abs2 = [], [], []
        for j in range(n_fields):
            spec = SolveSpec(eps, alpha, t, x, n_paths, root.child(i, j, 1), dt)
            sampler = factory(model, time_lattice(spec, dt, refine=dt_delta), root.child(i, j, 0))
            vals, _ = fk_values(sampler, f, spec, model, workers, refine=dt_delta)
            if dt_delta:
                vals, fine = vals
                means_fine.append(fine.mean())
            means.append(vals.mean())
            abs2.append(abs(means[-1]) ** 2)
        mean, se = _field_stats(means)
        row = {"epsilon": eps, "alpha": alpha, "t": t}
        row.update({f"x{k + 1}": v for k, v in enumerate(x)})
        row.update({"re_mean": mean.real, "im_mean": mean.imag, "re_stderr": se.real,
                    "im_stderr": se.imag, "u0_ref": u0 if u0 is not None else math.nan,
                    "abs_err": abs(mean - u0) if u0 is not None else math.nan,
                    "n_paths": n_paths, "n_fields": n_fields, "master_seed": master_seed})
        row["dt"] = dt
        row["mean_abs2"] = float(np.mean(abs2))
        if dt_delta:
            fine, _ = _field_stats(means_fine)
            row["dt_delta"] = abs(fine - mean)
        rows.append(row)
    return rows


def decreasing_within(values, stderrs, n_sigma: float = 3.0) -> bool:
    """values[k+1] < values[k] up to n_sigma combined stderr at every step."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(stderrs, dtype=float)
    return bool(np.all(v[1:] < v[:-1] + n_sigma * np.hypot(s[1:], s[:-1])))
