"""Shared numerical primitives: heat kernel, adaptive quadrature, RNG streams.

The quadrature here is a vectorised adaptive Gauss-Kronrod (7/15) scheme.
Every panel of a refinement round is evaluated in one integrand call, so the
integrand must accept a 1-D array of abscissae. Integrands may return an
array of shape ``(..., n)`` to integrate a batch of functions on shared
panels; convergence is then required for every batch component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError

__all__ = [
    "heat_kernel",
    "sphere_area",
    "QuadratureSpec",
    "QuadResult",
    "integrate",
    "integrate_semi_infinite",
    "integrate_spectral",
    "genz_malik",
    "RngStream",
]


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def heat_kernel(t, x, d=None):
    """Density of N(0, t I_d) at ``x``.

    ``x`` is a point (shape ``(d,)``) or a stack of points (shape ``(..., d)``).
    A scalar ``x`` is treated as a point in one dimension unless ``d`` says
    otherwise, in which case it is read as the radius |x|.
    """
    t = float(t)
    if not t > 0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        d = 1 if d is None else int(d)
        r2 = x * x
    else:
        if d is not None and x.shape[-1] != d:
            raise DomainError(f"point dimension {x.shape[-1]} does not match d={d}")
        d = x.shape[-1]
        r2 = np.sum(x * x, axis=-1)
    if d < 1:
        raise DomainError("dimension must be >= 1")
    return (2.0 * math.pi * t) ** (-d / 2) * np.exp(-r2 / (2.0 * t))


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_evals: int = 10**7

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be > 0")
        if self.abs_tol < 0:
            raise DomainError("abs_tol must be >= 0")
        if self.max_evals < 100:
            raise DomainError("max_evals must be >= 100")

    def scaled(self, factor: float) -> "QuadratureSpec":
        return QuadratureSpec(self.rel_tol * factor, self.abs_tol * factor, self.max_evals)


DEFAULT_QUAD = QuadratureSpec()


class QuadResult(NamedTuple):
    value: float | np.ndarray
    error: float | np.ndarray
    n_evals: int
    converged: bool


# Kronrod 15-point nodes on [-1, 1] (symmetric, ascending) and weights; the
# embedded 7-point Gauss rule uses every other node.
_XK_HALF = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK_HALF = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG_HALF = np.array([
    0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327,
])
XK = np.concatenate([-_XK_HALF[:-1], _XK_HALF[::-1]])
WK = np.concatenate([_WK_HALF[:-1], _WK_HALF[::-1]])
WG = np.concatenate([_WG_HALF[:-1], _WG_HALF[::-1]])


def _eval_panels(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = (c[:, None] + h[:, None] * XK[None, :]).ravel()
    fx = np.asarray(f(x))
    fx = fx.reshape(fx.shape[:-1] + (a.size, XK.size))
    k = (fx @ WK) * h
    g = (fx @ WG) * h
    return k, np.abs(k - g)


def _adaptive(f, a, b, spec, n_init=1):
    """Adaptive GK15 on a finite interval; returns (value, error, n_evals, ok)."""
    edges = np.linspace(a, b, n_init + 1)
    lo, hi = edges[:-1], edges[1:]
    vals, errs = _eval_panels(f, lo, hi)
    n_evals = lo.size * XK.size
    while True:
        total = vals.sum(axis=-1)
        err = errs.sum(axis=-1)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(err <= tol):
            return total, err, n_evals, True
        # badness of each panel: worst ratio over batch components
        ratio = errs / np.expand_dims(np.where(tol > 0, tol, np.inf), -1)
        bad = ratio.reshape(-1, lo.size).max(axis=0) if ratio.ndim > 1 else ratio
        width_ok = (hi - lo) > 64 * np.finfo(float).eps * np.maximum(1.0, np.abs(lo))
        split = (bad >= 0.1 * bad.max()) & width_ok
        if not split.any() or n_evals + 2 * split.sum() * XK.size > spec.max_evals:
            return total, err, n_evals, False
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _eval_panels(f, new_lo, new_hi)
        n_evals += new_lo.size * XK.size
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[..., keep], nv], axis=-1)
        errs = np.concatenate([errs[..., keep], ne], axis=-1)


def _half_line(f, a, sign):
    # x = a + sign * (u / (1 - u))^2, u in [0, 1); the square keeps the
    # mapped integrand bounded for tails as slow as |x|^{-3/2}
    def g(u):
        one_minus = 1.0 - u
        v = u / one_minus
        return f(a + sign * v * v) * (2.0 * u / (one_minus * one_minus * one_minus))
    return g


def integrate(f: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUAD,
              n_init: int = 1) -> QuadResult:
    """Adaptive integral of ``f`` over ``[a, b]``; either end may be infinite."""
    if a == b:
        probe = np.asarray(f(np.array([float(a)])))
        zero = np.zeros(probe.shape[:-1]) if probe.ndim > 1 else 0.0
        return QuadResult(zero, zero, 1, True)
    if a > b:
        r = integrate(f, b, a, spec, n_init)
        return QuadResult(-r.value, r.error, r.n_evals, r.converged)
    a_inf, b_inf = math.isinf(a), math.isinf(b)
    if not a_inf and not b_inf:
        v, e, n, ok = _adaptive(f, float(a), float(b), spec, n_init)
    elif a_inf and b_inf:
        half = spec.scaled(0.5)
        v1, e1, n1, ok1 = _adaptive(_half_line(f, 0.0, 1.0), 0.0, 1.0, half, n_init)
        v2, e2, n2, ok2 = _adaptive(_half_line(f, 0.0, -1.0), 0.0, 1.0, half, n_init)
        v, e, n, ok = v1 + v2, e1 + e2, n1 + n2, ok1 and ok2
    elif b_inf:
        v, e, n, ok = _adaptive(_half_line(f, float(a), 1.0), 0.0, 1.0, spec, n_init)
    else:
        v, e, n, ok = _adaptive(_half_line(f, float(b), -1.0), 0.0, 1.0, spec, n_init)
    if np.ndim(v) == 0:
        v, e = float(v), float(e)
    return QuadResult(v, e, int(n), bool(ok))


def integrate_semi_infinite(f: Callable, spec: QuadratureSpec = DEFAULT_QUAD) -> QuadResult:
    """Integral of ``f`` over [0, inf) via the map t = (u / (1 - u))^2."""
    return integrate(f, 0.0, math.inf, spec)


def integrate_spectral(g: Callable, d: int, spec: QuadratureSpec = DEFAULT_QUAD,
                       isotropic: bool = False) -> QuadResult:
    """Integral over (xi0, xi) in R x R^d.

    With ``isotropic=True`` the caller asserts that g depends on xi only
    through r = |xi| and supplies ``g(xi0, r)``; the integral is then reduced
    to S_{d-1} * int_0^inf r^{d-1} int_R g(xi0, r) dxi0 dr. Otherwise ``g`` is
    called as ``g(xi0, xi)`` with ``xi0`` of shape ``(m,)`` and ``xi`` of
    shape ``(m, d)``, and the (d+1)-dimensional integral is done by adaptive
    Genz-Malik cubature after mapping each axis to (-1, 1). The error
    estimate of that route (degree 7 minus degree 5) is conservative, so
    ``converged`` may be False while the value is already accurate.
    """
    if d < 1 or d > 4:
        raise DomainError(f"spectral integrals support 1 <= d <= 4, got {d}")
    inner_spec = spec.scaled(0.1)
    state = {"n": 0, "ok": True}

    if isotropic:
        def outer(r):
            def inner(xi0):
                return g(xi0[None, :], r[:, None])
            res = integrate(inner, -math.inf, math.inf, inner_spec)
            state["n"] += res.n_evals
            state["ok"] &= res.converged
            return np.asarray(res.value) * r ** (d - 1)

        res = integrate(outer, 0.0, math.inf, spec)
        area = sphere_area(d)
        value = area * res.value
        error = area * res.error + inner_spec.rel_tol * abs(value)
        return QuadResult(float(value), float(error), state["n"],
                          res.converged and state["ok"])

    def mapped(u):
        # each axis: x = u / (1 - u^2), u in (-1, 1)
        w = 1.0 - u * u
        x = u / w
        jac = np.prod((1.0 + u * u) / (w * w), axis=-1)
        return np.asarray(g(x[:, 0], x[:, 1:])) * jac

    n = d + 1
    return genz_malik(mapped, -np.ones(n), np.ones(n), spec)


def _genz_malik_points(n):
    l2, l3, l4, l5 = math.sqrt(9 / 70), math.sqrt(9 / 10), math.sqrt(9 / 10), math.sqrt(9 / 19)
    eye = np.eye(n)
    pts = [np.zeros((1, n))]
    pts += [l2 * eye, -l2 * eye, l3 * eye, -l3 * eye]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for si in (1.0, -1.0):
        for sj in (1.0, -1.0):
            blk = np.zeros((len(pairs), n))
            for r, (i, j) in enumerate(pairs):
                blk[r, i], blk[r, j] = si * l4, sj * l4
            pts.append(blk)
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    pts.append(l5 * corners)
    p = np.concatenate(pts)
    two_n = 2.0**n
    w7 = np.concatenate([
        [two_n * (12824 - 9120 * n + 400 * n * n) / 19683],
        np.full(4 * n, 0.0),
        np.full(2 * n * (n - 1), two_n * 200 / 19683),
        np.full(2**n, 6859 / 19683),
    ])
    w7[1:2 * n + 1] = two_n * 980 / 6561
    w7[2 * n + 1:4 * n + 1] = two_n * (1820 - 400 * n) / 19683
    w5 = np.concatenate([
        [two_n * (729 - 950 * n + 50 * n * n) / 729],
        np.full(2 * n, two_n * 245 / 486),
        np.full(2 * n, two_n * (265 - 100 * n) / 1458),
        np.full(2 * n * (n - 1), two_n * 25 / 729),
        np.zeros(2**n),
    ])
    return p, w7, w5, (l2 / l3) ** 2


def genz_malik(f: Callable, lo, hi, spec: QuadratureSpec = DEFAULT_QUAD) -> QuadResult:
    """Adaptive degree-7/5 Genz-Malik cubature over a box in R^n, n >= 2.

    ``f`` maps points of shape ``(m, n)`` to values of shape ``(m,)``.
    Boxes are bisected along the axis with the largest fourth difference.
    """
    lo = np.atleast_2d(np.asarray(lo, float))
    hi = np.atleast_2d(np.asarray(hi, float))
    n = lo.shape[1]
    if n < 2:
        raise DomainError("Genz-Malik cubature needs n >= 2")
    pts, w7, w5, ratio = _genz_malik_points(n)
    m = pts.shape[0]

    def rule(blo, bhi):
        c = 0.5 * (blo + bhi)
        h = 0.5 * (bhi - blo)
        x = c[:, None, :] + h[:, None, :] * pts[None, :, :]
        fx = np.asarray(f(x.reshape(-1, n)), float).reshape(blo.shape[0], m)
        vol = np.prod(h, axis=1)
        i7 = vol * (fx @ w7)
        i5 = vol * (fx @ w5)
        f0 = fx[:, :1]
        d2 = fx[:, 1:n + 1] + fx[:, n + 1:2 * n + 1] - 2 * f0
        d3 = fx[:, 2 * n + 1:3 * n + 1] + fx[:, 3 * n + 1:4 * n + 1] - 2 * f0
        axis = np.argmax(np.abs(d2 - ratio * d3), axis=1)
        return i7, np.abs(i7 - i5), axis

    vals, errs, axes = rule(lo, hi)
    n_evals = lo.shape[0] * m
    while True:
        total = vals.sum()
        err = errs.sum()
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if err <= tol:
            return QuadResult(float(total), float(err), n_evals, True)
        order = np.argsort(-errs, kind="stable")
        remaining = err - np.cumsum(errs[order])
        n_split = int(np.searchsorted(-remaining, -0.5 * tol)) + 1
        n_split = min(n_split, order.size, 8192)
        if n_evals + 2 * n_split * m > spec.max_evals:
            return QuadResult(float(total), float(err), n_evals, False)
        sel = order[:n_split]
        keep = np.ones(errs.size, bool)
        keep[sel] = False
        slo, shi, sax = lo[sel], hi[sel], axes[sel]
        rows = np.arange(n_split)
        mid = 0.5 * (slo[rows, sax] + shi[rows, sax])
        lo_a, hi_a = slo.copy(), shi.copy()
        hi_a[rows, sax] = mid
        lo_b, hi_b = slo.copy(), shi.copy()
        lo_b[rows, sax] = mid
        new_lo = np.concatenate([lo_a, lo_b])
        new_hi = np.concatenate([hi_a, hi_b])
        nv, ne, na = rule(new_lo, new_hi)
        n_evals += new_lo.shape[0] * m
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])
        axes = np.concatenate([axes[keep], na])


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of a counter-based random stream.

    The generator is Philox keyed by (master_seed, stream_id), so a stream's
    draws depend only on the pair, never on which worker consumes it.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        key = (int(self.master_seed) << 64) | int(self.stream_id)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *ids: int) -> "RngStream":
        """Derived stream for a sub-consumer (field index, path block, ...)."""
        words = np.random.SeedSequence([int(self.stream_id), *map(int, ids)]).generate_state(2, np.uint32)
        sid = (int(words[0]) << 32) | int(words[1])
        return RngStream(self.master_seed, sid)
