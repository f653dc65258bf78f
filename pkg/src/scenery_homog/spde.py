"""The α = ∞ regime: white-in-time limit noise and its moments.

With potential ε^{−1/2} V(t/ε, x) the Feynman-Kac phase converges to a
Brownian functional of a Gaussian noise Ẇ with covariance δ(t − s) 𝓡(x − y),
𝓡(x) = ∫ R(t, x) dt. Mollifying Ẇ by φ_ε(t) = ε^{-1} 1_{[−ε, 0]}(t) in time
and by a heat kernel of variance ε in space gives W_ε with

    E W_ε(t, x) W_ε(s, y) = ((ε − |t − s|)/ε²) 1_{|t−s|<ε} C_ε(x − y),
    C_ε(z) = (2π)^{-d} ∫ e^{−|ξ|²ε} 𝓡̂(ξ) e^{iξ·z} dξ.

The limit moments E[u^{N1} conj(u)^{N2}] of the Stratonovich equation are
Brownian expectations with the closed-form 𝓡; no noise is sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .covariance import CovarianceModel, radial_fourier_kernel
from .errors import DomainError
from .fk import (InitialData, MonteCarloEstimate, SolveSpec, default_fk_dt, fk_values, heat_semigroup,
                 solve_u_eps, time_lattice)
from .numerics import QuadratureSpec, RngStream, integrate_semi_infinite, sphere_area
from .paths import PathEnsemble, PathSpec, midpoints

__all__ = [
    "MollifierSpec",
    "MomentSpec",
    "mollified_noise_cov",
    "smoothed_time_integral",
    "cell_pair_weights",
    "cauchy_variance",
    "limit_moment",
    "u_eps_alpha_inf",
    "moment_compare",
]


@dataclass(frozen=True)
class MollifierSpec:
    eps_moll: float

    def __post_init__(self):
        if not self.eps_moll > 0:
            raise DomainError("eps_moll must be > 0")

    def window(self, lag):
        """Triangular autocorrelation of the temporal mollifier."""
        e = self.eps_moll
        return np.clip(e - np.abs(np.asarray(lag, dtype=float)), 0.0, None) / (e * e)


def smoothed_time_integral(model: CovarianceModel, eps_moll: float, z):
    """C_ε(z): 𝓡 convolved with a centred Gaussian of covariance 2ε I."""
    z = np.asarray(z, dtype=float)
    r = np.sqrt(np.sum(z * z, axis=-1)) if z.ndim else np.abs(z)
    d = model.d
    if model.separable:
        s2 = model.ell_x**2 + 2.0 * eps_moll
        return (model.amplitude * model.ell_t * math.sqrt(2 * math.pi)
                * (model.ell_x**2 / s2) ** (d / 2) * np.exp(-0.5 * r * r / s2))
    spec = QuadratureSpec(1e-10, 1e-14)
    area = sphere_area(d) * (2 * math.pi) ** (-d)
    flat = np.atleast_1d(r).ravel()
    out = np.empty(flat.shape)
    for i, ri in enumerate(flat):
        def g(rho, ri=ri):
            return (np.exp(-rho * rho * eps_moll) * model.time_integral_spectrum(rho)
                    * radial_fourier_kernel(rho * ri, d) * rho ** (d - 1))
        out[i] = area * integrate_semi_infinite(g, spec).value
    return out.reshape(r.shape) if r.ndim else float(out[0])


def mollified_noise_cov(model: CovarianceModel, spec: MollifierSpec, dt_lag, dx_lag):
    """E W_ε(t, x) W_ε(t + dt_lag, x + dx_lag)."""
    w = spec.window(dt_lag)
    if not np.any(w):
        return w * 0.0 if np.ndim(w) else 0.0
    out = w * smoothed_time_integral(model, spec.eps_moll, dx_lag)
    return out if np.ndim(out) else float(out)


def cell_pair_weights(eps_moll: float, h: float):
    """w_m = ∫∫ over cells i, i+m of the triangular window, m = 0, 1, ...

    Equals ∫ (h − |τ − m h|)_+ tri(τ) dτ. The integrand is piecewise
    quadratic, so two-point Gauss-Legendre per piece is exact.
    """
    e = eps_moll
    m_max = int(math.ceil(e / h)) + 1
    nodes, wts = np.polynomial.legendre.leggauss(2)
    out = np.zeros(m_max + 1)
    for m in range(m_max + 1):
        c = m * h
        br = sorted({c - h, c, c + h, -e, 0.0, e})
        tot = 0.0
        for a, b in zip(br[:-1], br[1:]):
            lo, hi = max(a, c - h, -e), min(b, c + h, e)
            if hi <= lo:
                continue
            tau = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            f = (h - np.abs(tau - c)) * (e - np.abs(tau)) / (e * e)
            tot += 0.5 * (hi - lo) * float(wts @ f)
        out[m] = tot
    return out


def cauchy_variance(model: CovarianceModel, spec: MollifierSpec, path, t: float, dt: float | None = None,
                    x=None) -> float:
    """E[(∫_0^t W_ε(t − s, x + B_s) ds)² | B] for a frozen path.

    ``path`` holds positions on a uniform grid of step ``dt`` (default: the
    grid spans [0, t]). The path is held at its cell midpoint inside each
    cell and the cell-pair integrals of the window are exact, so for a
    constant path the result is exactly (t − ε/3) C_ε(0) when ε ≤ t.
    ``x`` does not enter: the noise is stationary.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return 0.0
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    dt = t / (path.shape[0] - 1) if dt is None else float(dt)
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * t or n > path.shape[0] - 1:
        raise DomainError("path does not cover [0, t] on a grid dividing t")
    mid = 0.5 * (path[1:n + 1] + path[:n])
    w = cell_pair_weights(spec.eps_moll, dt)
    total = w[0] * n * smoothed_time_integral(model, spec.eps_moll, np.zeros(path.shape[1]))
    for m in range(1, min(len(w), n)):
        if w[m] == 0.0:
            continue
        c = smoothed_time_integral(model, spec.eps_moll, mid[m:] - mid[:-m])
        total += 2.0 * w[m] * float(np.sum(c))
    return float(total)


@dataclass(frozen=True)
class MomentSpec:
    N1: int
    N2: int
    n_path_tuples: int
    t: float
    x: tuple
    stream: RngStream
    dt: float | None = None

    def __post_init__(self):
        if self.N1 < 0 or self.N2 < 0 or self.N1 + self.N2 < 1:
            raise DomainError("need N1, N2 >= 0 and N1 + N2 >= 1")
        if self.n_path_tuples < 2:
            raise DomainError("need at least 2 path tuples")
        if not self.t > 0:
            raise DomainError("t must be > 0")

    @property
    def signs(self) -> np.ndarray:
        return np.array([1.0] * self.N1 + [-1.0] * self.N2)


def _script_r(model: CovarianceModel):
    """Vectorised 𝓡(r): closed form, or a cubic spline on [0, M] for tapered models."""
    if model.separable:
        c = model.amplitude * model.ell_t * math.sqrt(2 * math.pi)
        return lambda r: c * np.exp(-0.5 * (r / model.ell_x) ** 2)
    m = model.support
    grid = np.linspace(0.0, m, 257)
    vals = np.array([model.time_integral(float(r)) for r in grid])
    spline = CubicSpline(grid, vals)
    return lambda r: np.where(r < m, spline(np.minimum(r, m)), 0.0)


def limit_moment(model: CovarianceModel, f: InitialData, spec: MomentSpec, workers=None) -> MonteCarloEstimate:
    """E[u^{N1} conj(u)^{N2}] of the limit equation by Monte Carlo over path tuples.

    Integrand ∏_j f(x + B_t^j) exp(−½ Σ_{m,n} b_m b_n ∫_0^t 𝓡(B^m − B^n) ds).
    Diagonal terms contribute 𝓡(0) t each; off-diagonal time integrals use
    the midpoint rule. A single path has a deterministic exponent, so the
    (1, 0) and (0, 1) moments are returned in closed form.
    """
    N = spec.N1 + spec.N2
    x = np.asarray(spec.x, dtype=float)
    d = x.size
    r0 = float(model.time_integral(0.0))
    seed = {"master_seed": spec.stream.master_seed, "stream_id": spec.stream.stream_id}
    if N == 1:
        value = math.exp(-0.5 * r0 * spec.t) * heat_semigroup(f, spec.t, x)
        return MonteCarloEstimate(complex(value), 0j, spec.n_path_tuples, seed, None,
                                  {"exact": True})
    dt = spec.dt or min(0.02, model.ell_x**2 / 16.0)
    dt = spec.t / math.ceil(spec.t / dt - 1e-9)
    script = _script_r(model)
    b = spec.signs
    ens = [PathEnsemble(PathSpec(d, spec.t, dt, spec.n_path_tuples, spec.stream.child(j))) for j in range(N)]
    values = []
    for blk in range(ens[0].spec.n_blocks):
        gens = [e.chunks(blk) for e in ens]
        cross = np.zeros(ens[0].block_rows(blk))
        last = [None] * N
        for parts in zip(*gens):
            mids = [midpoints(p) for _, p in parts]
            for m in range(N):
                for n in range(m + 1, N):
                    r = np.sqrt(np.sum((mids[m] - mids[n]) ** 2, axis=-1))
                    cross += b[m] * b[n] * script(r).sum(axis=1)
            last = [p[:, -1] for _, p in parts]
        expo = -0.5 * (N * r0 * spec.t + 2.0 * dt * cross)
        prod = np.prod([f(x + last[j]) for j in range(N)], axis=0)
        values.append(prod * np.exp(expo))
    vals = np.concatenate(values).astype(complex)
    return MonteCarloEstimate.from_values(vals, seed, {"dt": dt, "exact": False})


def u_eps_alpha_inf(sampler, f: InitialData, t: float, x, epsilon: float, n_paths: int,
                    stream: RngStream, dt: float | None = None, model=None, workers=None) -> MonteCarloEstimate:
    """Feynman-Kac estimate with phase ε^{−1/2} ∫_0^t V(s/ε, x + B_s) ds."""
    spec = SolveSpec(epsilon, math.inf, t, tuple(float(v) for v in x), n_paths, stream, dt)
    return solve_u_eps(sampler, f, spec, model=model, workers=workers)


def _moment_product(vals, N1, N2):
    out = np.ones_like(vals[0])
    for j in range(N1):
        out = out * vals[j]
    for j in range(N1, N1 + N2):
        out = out * np.conj(vals[j])
    return out


def moment_compare(factory, model: CovarianceModel, f: InitialData, moments, eps_schedule,
                   t: float = 1.0, x=None, n_paths: int = 2000, n_fields: int = 10,
                   master_seed: int = 0, n_limit_tuples: int = 20000, workers=None):
    """Rows comparing annealed moments of u_ε (α = ∞) with the limit moments.

    For each ε and field realization, max(N1 + N2) independent path
    ensembles are run on the same field; the moment of a tuple is the
    product of its members' Feynman-Kac integrands (conjugated for the
    last N2). moment_ε is the field-ensemble mean, its stderr the spread of
    per-field means.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if len(eps_schedule) < 2 or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise DomainError("eps_schedule must be strictly decreasing with length >= 2")
    moments = [tuple(int(v) for v in m) for m in moments]
    if not moments:
        raise DomainError("need at least one (N1, N2) pair")
    x = tuple(float(v) for v in (x if x is not None else (0.0,) * model.d))
    n_max = max(a + b for a, b in moments)
    root = RngStream(master_seed)
    limits = {m: limit_moment(model, f, MomentSpec(m[0], m[1], n_limit_tuples, t, x, root.child(10**6, k)))
              for k, m in enumerate(moments)}
    rows = []
    for i, eps in enumerate(eps_schedule):
        probe = SolveSpec(eps, math.inf, t, x, n_paths, root)
        dt = default_fk_dt(probe, model)
        per_field = {m: [] for m in moments}
        for j in range(n_fields):
            sampler = factory(model, time_lattice(probe, dt), root.child(i, j, 0))
            vals = []
            for k in range(n_max):
                spec = SolveSpec(eps, math.inf, t, x, n_paths, root.child(i, j, 1, k), dt)
                v, _ = fk_values(sampler, f, spec, model, workers)
                vals.append(v)
            for m in moments:
                per_field[m].append(_moment_product(vals, *m).mean())
        for m in moments:
            est = MonteCarloEstimate.from_values(per_field[m], {"master_seed": master_seed})
            lim = limits[m]
            row = {"epsilon": eps, "alpha": math.inf, "t": t}
            row.update({f"x{k + 1}": v for k, v in enumerate(x)})
            row.update({"N1": m[0], "N2": m[1], "re_mean": est.mean.real, "im_mean": est.mean.imag,
                        "re_stderr": est.stderr.real, "im_stderr": est.stderr.imag,
                        "u0_ref": lim.mean.real, "abs_err": abs(est.mean - lim.mean),
                        "n_paths": n_paths, "n_fields": n_fields, "master_seed": master_seed,
                        "dt": dt, "limit_im": lim.mean.imag,
                        "limit_stderr": abs(lim.stderr)})
            rows.append(row)
    return rows
