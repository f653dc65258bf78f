"""Effective coefficients and corrector diagnostics.

ρ(α) is the damping rate of the homogenized equation:

    G2  (α > 2):  ∫_0^∞ R(t, 0) dt
    EQ2 (α = 2):  ∫_0^∞ E_B R(t, B_t) dt
    LT2 (α < 2):  ∫_0^∞ E_B R(0, B_t) dt

and σ² = 2ρ. The spectral forms and the regularized quantities σ_λ²,
λ<Φ_λ, Φ_λ> are radial (ξ0, |ξ|) integrals of R̂.

The corrector solves (λ − L)Φ_λ = V with L = c ∂_t + ½Δ, c = ε^{2−α}. On a
harmonic field it is exact mode by mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel
from .errors import ConvergenceError, DomainError, UnsupportedBackendError
from .field import HarmonicField
from .numerics import QuadratureSpec, integrate, integrate_semi_infinite, integrate_spectral, sphere_area
from .parallel import pmap
from .paths import PathEnsemble, SceneryRegime, midpoints

__all__ = [
    "EffectiveCoeffs",
    "CorrectorSpec",
    "DecompositionResult",
    "regime_for_alpha",
    "rho",
    "sigma2_spectral",
    "sigma2_lambda",
    "corrector_norm",
    "corrector_eval",
    "corrector_residual",
    "martingale_decompose",
    "envelope_potential_bound",
]

REGIMES = ("G2", "EQ2", "LT2")
RHO_QUAD = QuadratureSpec(rel_tol=1e-11, abs_tol=1e-14)
SPECTRAL_QUAD = QuadratureSpec(rel_tol=1e-9, abs_tol=1e-14)


def regime_for_alpha(alpha: float) -> str:
    if alpha > 2:
        return "G2"
    return "EQ2" if alpha == 2 else "LT2"


@dataclass
class EffectiveCoeffs:
    rho: float
    sigma2: float
    regime: str
    rho_error: float
    n_evals: int
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"regime": self.regime, "rho": self.rho, "sigma2": self.sigma2,
                           "rho_error": self.rho_error, "sigma2_error": 2 * self.rho_error,
                           "n_evals": self.n_evals, **self.meta}, sort_keys=True)


def _check(res, what):
    if not res.converged:
        raise ConvergenceError(f"{what}: quadrature did not converge "
                               f"(value {res.value:.12g}, error {res.error:.3g})")
    return res


def rho(model: CovarianceModel, regime: str, spec: QuadratureSpec = RHO_QUAD) -> EffectiveCoeffs:
    """ρ(α) by 1-D quadrature of the time-domain formula."""
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}")
    if regime == "G2":
        f = model.time_radial
    elif regime == "EQ2":
        f = model.heat_average
    else:
        def f(t):
            return model.heat_average(t, np.zeros_like(t))
    res = _check(integrate_semi_infinite(f, spec), f"rho({regime})")
    meta = {}
    if regime != "G2" and model.d < 3:
        meta["warning"] = "d < 3: the time integral may diverge"
    return EffectiveCoeffs(res.value, 2 * res.value, regime, res.error, res.n_evals, meta)


def _radial(model, weight, spec):
    """(2π)^{-(d+1)} ∫ weight(ξ0, r) R̂(ξ0, r) dξ0 dξ over R x R^d."""
    d = model.d

    def g(xi0, r):
        return weight(xi0, r) * model.spectrum_radial(xi0, r)

    res = integrate_spectral(g, d, spec, isotropic=True)
    norm = (2 * math.pi) ** (-(d + 1))
    return norm * res.value, norm * res.error, res


def sigma2_spectral(model: CovarianceModel, regime: str, spec: QuadratureSpec = SPECTRAL_QUAD) -> float:
    """σ² from its spectral form (EQ2 or LT2)."""
    if regime == "EQ2":
        def w(xi0, r):
            r2 = r * r
            return r2 / (0.25 * r2 * r2 + xi0 * xi0)
    elif regime == "LT2":
        if model.d < 3:
            raise DomainError("the LT2 spectral form needs d >= 3")

        def w(xi0, r):
            return 4.0 / (r * r)
    else:
        raise DomainError("spectral σ² is defined for EQ2 and LT2")
    value, _, res = _radial(model, w, spec)
    _check(res, f"sigma2_spectral({regime})")
    return value


@dataclass(frozen=True)
class CorrectorSpec:
    epsilon: float
    alpha: float
    lam: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be > 0")
        if self.lam is not None and not self.lam > 0:
            raise DomainError("lambda must be > 0")

    @property
    def lam_value(self) -> float:
        return self.epsilon**2 if self.lam is None else float(self.lam)

    @property
    def c(self) -> float:
        """Time coefficient ε^{2−α} of the generator."""
        return self.epsilon ** (2.0 - self.alpha)


def _resolvent_denominator(spec: CorrectorSpec):
    lam, c2 = spec.lam_value, spec.c**2

    def den(xi0, r):
        a = lam + 0.5 * r * r
        return a * a + c2 * xi0 * xi0
    return den


def sigma2_lambda(model: CovarianceModel, spec: CorrectorSpec, qspec: QuadratureSpec = SPECTRAL_QUAD) -> float:
    """σ_λ² = Σ_k ||D_k Φ_λ||²."""
    den = _resolvent_denominator(spec)
    value, _, res = _radial(model, lambda xi0, r: r * r / den(xi0, r), qspec)
    _check(res, "sigma2_lambda")
    return value


def corrector_norm(model: CovarianceModel, spec: CorrectorSpec, qspec: QuadratureSpec = SPECTRAL_QUAD) -> float:
    """λ<Φ_λ, Φ_λ>."""
    den = _resolvent_denominator(spec)
    lam = spec.lam_value
    value, _, res = _radial(model, lambda xi0, r: lam / den(xi0, r), qspec)
    _check(res, "corrector_norm")
    return value


# ---------------------------------------------------------------------------
# exact corrector on a harmonic field

def _require_harmonic(fld):
    if not isinstance(fld, HarmonicField):
        raise UnsupportedBackendError(f"the corrector needs a harmonic field, got {getattr(fld, 'backend', type(fld).__name__)}")


def _mode_factors(fld: HarmonicField, spec: CorrectorSpec):
    k2 = np.sum(fld.k * fld.k, axis=1)
    return fld.amp / (spec.lam_value + 0.5 * k2 - 1j * fld.omega * spec.c)


def _corrector_parts(fld, spec, t, x, derivatives=False):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    e = np.exp(1j * fld.phases(t, x)) * _mode_factors(fld, spec)   # (..., J)
    phi = e.real.sum(axis=-1)
    grad = np.real(1j * e @ fld.k)
    if not derivatives:
        return phi, grad
    dt_phi = np.real(1j * e @ fld.omega)
    lap = np.real(-e @ np.sum(fld.k * fld.k, axis=1))
    return phi, grad, dt_phi, lap


def corrector_eval(fld, spec: CorrectorSpec, t, x):
    """Φ_λ(t, x) and its spatial gradient (last axis of length d)."""
    _require_harmonic(fld)
    return _corrector_parts(fld, spec, t, x)


def corrector_residual(fld, spec: CorrectorSpec, t, x):
    """(λ − c∂_t − ½Δ)Φ_λ − V from analytic derivatives."""
    _require_harmonic(fld)
    phi, _, dt_phi, lap = _corrector_parts(fld, spec, t, x, derivatives=True)
    return spec.lam_value * phi - spec.c * dt_phi - 0.5 * lap - fld(t, x)


@dataclass
class DecompositionResult:
    X: np.ndarray
    R_term: np.ndarray
    M_term: np.ndarray
    qv: np.ndarray       # ε² ∫ (D_k Φ_λ)² ds, shape (n_paths, d)
    drift: np.ndarray    # ε² ∫ D_k Φ_λ ds, shape (n_paths, d)
    meta: dict = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        return self.X - self.R_term - self.M_term


_SUB_STEPS = 128


def _decompose_block(fld, spec, paths, b, n):
    eps, c, lam = spec.epsilon, spec.c, spec.lam_value
    dt = paths.dt
    rows = paths.block_rows(b)
    X = np.zeros(rows)
    R = np.zeros(rows)
    M = np.zeros(rows)
    qv = np.zeros((rows, fld.d))
    drift = np.zeros((rows, fld.d))
    for start, pos in paths.chunks(b, n):
        for s0 in range(0, pos.shape[1] - 1, _SUB_STEPS):
            seg = pos[:, s0:s0 + _SUB_STEPS + 1]
            k = seg.shape[1] - 1
            idx = start + s0 + np.arange(k)
            s_nodes = c * dt * np.append(idx, idx[-1] + 1)
            s_mid = c * dt * (idx + 0.5)
            mid = midpoints(seg)
            v_mid = fld(s_mid[None, :], mid)
            phi_mid, grad_mid = _corrector_parts(fld, spec, np.broadcast_to(s_mid, (rows, k)), mid)
            phi_nodes, grad_nodes = _corrector_parts(fld, spec, np.broadcast_to(s_nodes, (rows, k + 1)), seg)
            X += v_mid.sum(axis=1)
            R += lam * phi_mid.sum(axis=1)
            M += np.einsum("ijk,ijk->i", grad_nodes[:, :-1], np.diff(seg, axis=1))
            qv += np.sum(grad_mid**2, axis=1)
            drift += np.sum(grad_mid, axis=1)
            if start + s0 == 0:
                phi0 = phi_nodes[:, 0]
            phi_end = phi_nodes[:, -1]
    R = eps * dt * R - eps * phi_end + eps * phi0
    return eps * dt * X, R, eps * M, eps**2 * dt * qv, eps**2 * dt * drift


def martingale_decompose(fld, paths: PathEnsemble, spec: CorrectorSpec, t: float,
                         workers=None) -> DecompositionResult:
    """X = R + M + residual along each path (LE2 scaling).

    X = ε ∫_0^{t/ε²} V(c s, B_s) ds by the midpoint rule,
    R = ε ∫ λΦ_λ ds − ε Φ_λ(end) + ε Φ_λ(0) by the midpoint rule,
    M = ε Σ_k ∫ D_kΦ_λ dB^k as a left-point Itô sum.
    """
    _require_harmonic(fld)
    regime = SceneryRegime("LE2", spec.alpha, spec.epsilon)
    horizon = regime.horizon(t)
    r = horizon / paths.dt
    n = int(round(r))
    if abs(n - r) > 1e-6 * max(r, 1.0) or n > paths.n_steps:
        raise DomainError("paths do not cover t/ε² on their grid")
    parts = pmap(_decompose_block, [(fld, spec, paths, b, n) for b in range(paths.spec.n_blocks)], workers)
    X, R, M, qv, drift = (np.concatenate(p) for p in zip(*parts))
    return DecompositionResult(X, R, M, qv, drift, {"dt": paths.dt, "n_steps": n, "lambda": spec.lam_value})


def envelope_potential_bound(model: CovarianceModel, t: float = 1.0,
                             spec: QuadratureSpec = RHO_QUAD) -> float:
    """t ∫ g(x) |x|^{2−d} dx with g = sup_t |R(t, ·)|, by radial quadrature."""
    d = model.d
    if d < 3:
        raise DomainError("the |x|^{2-d} weight needs d >= 3")

    def f(r):
        r = np.asarray(r, dtype=float)
        g = np.array([float(model.envelope(float(v))) for v in r.ravel()]).reshape(r.shape)
        return g * r
    if model.separable:
        res = integrate_semi_infinite(f, spec)
    else:
        res = integrate(f, 0.0, model.support, QuadratureSpec(1e-8, 1e-12))
    _check(res, "envelope_potential_bound")
    return t * sphere_area(d) * res.value
