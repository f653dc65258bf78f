"""Covariance models R(t, x) of a stationary space-time field.

Two families are provided. ``gaussian_separable`` has closed forms for
everything and serves as the oracle model. ``tapered_gaussian`` multiplies
it by a compactly supported Wendland taper in the space-time radius, which
gives finite-range dependence; its power spectrum is tabulated once at
construction and interpolated.

Conventions: R̂(xi0, xi) = ∫ e^{-i(xi0 t + xi.x)} R(t, x) dt dx, so that
R(t, x) = (2π)^{-(d+1)} ∫ e^{i(xi0 t + xi.x)} R̂ dxi0 dxi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from scipy.interpolate import RectBivariateSpline

from .errors import DomainError
from .numerics import QuadratureSpec, integrate, sphere_area

__all__ = [
    "CovarianceModel",
    "r_eval",
    "r_hat_eval",
    "r_time_integral",
    "sup_envelope",
    "radial_fourier_kernel",
    "wendland",
]

KINDS = ("gaussian_separable", "tapered_gaussian")


def wendland(r):
    """Wendland C^2 function (1 - r)_+^5 (5r + 1), positive definite in R^n, n <= 5."""
    r = np.asarray(r, dtype=float)
    s = np.clip(1.0 - r, 0.0, None)
    return s**5 * (5.0 * r + 1.0)


def radial_fourier_kernel(z, d):
    """Angular average of e^{-i xi.x} over the sphere, as a function of z = |xi||x|.

    Equals Γ(d/2) (2/z)^{d/2-1} J_{d/2-1}(z); cos z for d=1, sin z / z for d=3.
    """
    z = np.asarray(z, dtype=float)
    if d == 1:
        return np.cos(z)
    if d == 3:
        return np.sinc(z / math.pi)
    nu = d / 2 - 1
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = special.gamma(nu + 1) * (2.0 / zs) ** nu * special.jv(nu, zs)
    series = 1.0 - z * z / (4.0 * (nu + 1))
    return np.where(small, series, out)


def _norm(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return np.abs(x)
    if x.shape[-1] != d:
        raise DomainError(f"point dimension {x.shape[-1]} does not match d={d}")
    return np.sqrt(np.sum(x * x, axis=-1))


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary covariance R(t, x), isotropic in x.

    Point arguments ``x`` have shape ``(..., d)``; a scalar ``x`` is read as
    the radius |x|.
    """

    kind: str = "gaussian_separable"
    amplitude: float = 1.0
    ell_t: float = 1.0
    ell_x: float = 1.0
    d: int = 3
    taper_radius: float | None = None
    _table: dict | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown covariance kind {self.kind!r}")
        if not self.amplitude > 0:
            raise DomainError("amplitude must be > 0")
        if not (self.ell_t > 0 and self.ell_x > 0):
            raise DomainError("correlation lengths must be > 0")
        if not 1 <= int(self.d) <= 4:
            raise DomainError("d must be in 1..4")
        if self.kind == "tapered_gaussian":
            if self.taper_radius is None or not self.taper_radius > 0:
                raise DomainError("tapered_gaussian needs taper_radius > 0")
            object.__setattr__(self, "_table", _build_spectrum_table(self))
        elif self.taper_radius is not None:
            raise DomainError("taper_radius only applies to tapered_gaussian")

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "ell_t": self.ell_t,
                "ell_x": self.ell_x, "d": self.d, "taper_radius": self.taper_radius}

    @classmethod
    def from_dict(cls, obj: dict) -> "CovarianceModel":
        return cls(kind=obj.get("kind", "gaussian_separable"),
                   amplitude=float(obj.get("amplitude", 1.0)),
                   ell_t=float(obj.get("ell_t", 1.0)), ell_x=float(obj.get("ell_x", 1.0)),
                   d=int(obj.get("d", 3)), taper_radius=obj.get("taper_radius"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def scaled(self, factor: float) -> "CovarianceModel":
        """Same model with amplitude multiplied by ``factor``."""
        return CovarianceModel(self.kind, self.amplitude * factor, self.ell_t, self.ell_x,
                               self.d, self.taper_radius)

    @property
    def separable(self) -> bool:
        return self.kind == "gaussian_separable"

    @property
    def support(self) -> float:
        """Space-time radius beyond which R vanishes (inf if not compact)."""
        return math.inf if self.separable else float(self.taper_radius)

    # -- direct space ----------------------------------------------------
    def radial(self, t, r):
        """R as a function of t and r = |x|."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        out = self.amplitude * np.exp(-0.5 * (t / self.ell_t) ** 2 - 0.5 * (r / self.ell_x) ** 2)
        if not self.separable:
            out = out * wendland(np.sqrt(t * t + r * r) / self.taper_radius)
        return out

    def __call__(self, t, x):
        return self.radial(t, _norm(x, self.d))

    def time_radial(self, t):
        """R(t, 0)."""
        return self.radial(t, 0.0)

    # -- spectrum ----------------------------------------------------------
    def spectrum_radial(self, xi0, rho):
        """R̂ as a function of xi0 and rho = |xi|."""
        xi0 = np.asarray(xi0, dtype=float)
        rho = np.asarray(rho, dtype=float)
        if self.separable:
            d = self.d
            c = self.amplitude * (2 * math.pi) ** ((d + 1) / 2) * self.ell_t * self.ell_x**d
            return c * np.exp(-0.5 * (self.ell_t * xi0) ** 2 - 0.5 * (self.ell_x * rho) ** 2)
        tab = self._table
        a0, ar = np.abs(xi0), np.abs(rho)
        a0, ar = np.broadcast_arrays(a0, ar)
        inside = (a0 <= tab["xi0"][-1]) & (ar <= tab["rho"][-1])
        vals = tab["spline"].ev(np.minimum(a0, tab["xi0"][-1]), np.minimum(ar, tab["rho"][-1]))
        return np.where(inside, np.clip(vals, 0.0, None), 0.0)

    def spectrum(self, xi0, xi):
        return self.spectrum_radial(xi0, _norm(xi, self.d))

    @property
    def spectral_scales(self) -> tuple[float, float]:
        """Decay scales of R̂ in xi0 and |xi| (inverse correlation lengths)."""
        if self.separable:
            return 1.0 / self.ell_t, 1.0 / self.ell_x
        return self._table["xi0"][-1], self._table["rho"][-1]

    # -- derived quantities -------------------------------------------------
    def time_integral(self, x, spec: QuadratureSpec | None = None):
        """𝓡(x) = ∫ R(t, x) dt."""
        r = _norm(x, self.d)
        if self.separable:
            return self.amplitude * self.ell_t * math.sqrt(2 * math.pi) * np.exp(-0.5 * (r / self.ell_x) ** 2)
        spec = spec or QuadratureSpec(1e-10, 1e-14)
        flat = np.atleast_1d(r).ravel()
        out = np.zeros(flat.shape)
        m = self.taper_radius
        for i, ri in enumerate(flat):
            if ri < m:
                tmax = math.sqrt(m * m - ri * ri)
                out[i] = 2.0 * integrate(lambda t: self.radial(t, ri), 0.0, tmax, spec).value
        return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])

    def time_integral_spectrum(self, rho):
        """Spatial Fourier transform of 𝓡, which equals R̂(0, xi)."""
        return self.spectrum_radial(0.0, rho)

    def envelope(self, x):
        """g(x) = sup_t |R(t, x)|."""
        r = _norm(x, self.d)
        if self.separable:
            return self.amplitude * np.exp(-0.5 * (r / self.ell_x) ** 2)
        flat = np.atleast_1d(r).ravel()
        out = np.array([_sup_over_t(self, ri) for ri in flat])
        return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])

    def heat_average(self, t, s=None):
        """E_B R(s, B_t) = ∫ R(s, x) q_t(x) dx; ``s`` defaults to ``t``.

        Closed form for the separable model, radial quadrature otherwise.
        """
        t = np.asarray(t, dtype=float)
        s = t if s is None else np.asarray(s, dtype=float)
        d = self.d
        if self.separable:
            lx2 = self.ell_x**2
            return (self.amplitude * np.exp(-0.5 * (s / self.ell_t) ** 2)
                    * (lx2 / (lx2 + t)) ** (d / 2))
        t, s = np.broadcast_arrays(t, s)
        out = np.empty(t.shape)
        area = sphere_area(d)
        spec = QuadratureSpec(1e-11, 1e-15)
        m = self.taper_radius
        for idx in np.ndindex(t.shape):
            ti, si = float(t[idx]), float(s[idx])
            if abs(si) >= m:
                out[idx] = 0.0
                continue
            rmax = math.sqrt(m * m - si * si)
            if ti == 0.0:
                out[idx] = float(self.radial(si, 0.0))
                continue

            def f(r, ti=ti, si=si):
                return self.radial(si, r) * r ** (d - 1) * np.exp(-r * r / (2 * ti)) * (2 * math.pi * ti) ** (-d / 2)
            out[idx] = area * integrate(f, 0.0, rmax, spec).value
        return out if out.ndim else float(out)


def _sup_over_t(model, r):
    m = model.taper_radius
    if r >= m:
        return 0.0
    tmax = math.sqrt(m * m - r * r)
    grid = np.linspace(-tmax, tmax, 256)
    vals = np.abs(model.radial(grid, r))
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi <= lo:
        return float(vals[i])
    res = optimize.minimize_scalar(lambda t: -abs(float(model.radial(t, r))), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return float(max(vals[i], -res.fun))


def _table_axis(scale, top, n_core=193, n_tail=160):
    core = np.linspace(0.0, 6.0 * scale, n_core)
    tail = np.geomspace(6.0 * scale, top, n_tail + 1)[1:]
    return np.concatenate([core, tail])


def _build_spectrum_table(model, n_quad=900):
    """Tabulate R̂(xi0, rho) for the tapered model on a (xi0, rho) grid.

    R is even in t and radial in x, so
    R̂ = 2 ∫_0^M cos(xi0 t) S_{d-1} ∫_0^M R(t, r) r^{d-1} Ω_d(rho r) dr dt,
    done by Gauss-Legendre product rules (the taper vanishes to fifth order
    at the support boundary, so the cut costs little accuracy).
    """
    d, m = model.d, float(model.taper_radius)
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    u = 0.5 * (nodes + 1.0) * m
    w = 0.5 * weights * m
    h = model.radial(u[:, None], u[None, :])          # (t, r)
    # the taper's cusp at the origin leaves an algebraic tail in R̂, so the
    # table runs far past the Gaussian decay scale on a geometric grid
    xi0 = _table_axis(max(1.0 / model.ell_t, 1.0 / m), 200.0 / min(model.ell_t, m))
    rho = _table_axis(max(1.0 / model.ell_x, 1.0 / m), 200.0 / min(model.ell_x, m))
    ct = 2.0 * np.cos(np.outer(xi0, u)) * w                              # (xi0, t)
    kr = sphere_area(d) * radial_fourier_kernel(np.outer(u, rho), d) * (w * u ** (d - 1))[:, None]  # (r, rho)
    table = ct @ h @ kr
    spline = RectBivariateSpline(xi0, rho, table, kx=3, ky=3)
    return {"xi0": xi0, "rho": rho, "values": table, "spline": spline}


def r_eval(model: CovarianceModel, t, x):
    return model(t, x)


def r_hat_eval(model: CovarianceModel, xi0, xi):
    return model.spectrum(xi0, xi)


def r_time_integral(model: CovarianceModel, x):
    return model.time_integral(x)


def sup_envelope(model: CovarianceModel, x):
    return model.envelope(x)
