"""Realizations of a stationary mean-zero field V(t, x).

Backends:

* ``HarmonicField``: V = Σ_j amp_j cos(ω_j t + k_j.x + θ_j) with frequencies
  drawn from the normalized power spectrum. Uniformly bounded, exact at any
  point, covariance exact in expectation for every J.
* ``GridField``: Gaussian field on a periodic (d+1)-lattice synthesized by
  FFT from the discrete spectrum, read off by multilinear interpolation.
* ``HybridField``: Gaussian stationary processes in time carried by a
  harmonic expansion in space, V = √(A/J) Σ_j a_j(t) cos(k_j.x) + b_j(t) sin(k_j.x).
  Each a_j, b_j has the temporal correlation of the (separable) model, so the
  field is conditionally Gaussian in time; this avoids the heavy tails a
  finite cosine sum produces once long time integrals are taken.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft as sfft
from scipy import special, stats

from .covariance import CovarianceModel
from .errors import BudgetError, DomainError, SynthesisError, UnsupportedBackendError
from .numerics import RngStream

__all__ = [
    "HarmonicField",
    "GridSpec",
    "GridField",
    "HybridField",
    "synth_harmonic",
    "synth_grid",
    "synth_grid_pair",
    "grid_spectrum",
    "synth_hybrid",
    "constant_field",
    "field_eval",
    "empirical_cov",
    "cov_rows",
    "grid_site_samples",
    "wick_four_point",
    "discrete_spectrum",
    "lattice_covariance",
    "save_grid",
    "load_grid",
    "HarmonicFactory",
    "HybridFactory",
    "ConstantFactory",
    "make_factory",
]

_EVAL_CHUNK = 1 << 21          # points x modes per evaluation chunk
SPECTRAL_FLOOR = 1e-13         # relative cut below which discrete spectrum entries are dropped


def _split_points(t, x, d):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 and d == 1:
        x = x[None]
    if x.shape[-1] != d:
        raise DomainError(f"point dimension {x.shape[-1]} does not match field dimension {d}")
    shape = np.broadcast_shapes(t.shape, x.shape[:-1])
    return np.broadcast_to(t, shape), np.broadcast_to(x, shape + (d,)), shape


# ---------------------------------------------------------------------------
# harmonic backend

@dataclass(frozen=True, eq=False)
class HarmonicField:
    omega: np.ndarray
    k: np.ndarray
    amp: np.ndarray
    theta: np.ndarray
    model: CovarianceModel | None = None
    backend = "harmonic"

    @property
    def d(self) -> int:
        return self.k.shape[1]

    @property
    def J(self) -> int:
        return self.omega.size

    @property
    def bound(self) -> float:
        """sup |V| <= Σ amp_j."""
        return float(np.sum(np.abs(self.amp)))

    def phases(self, t, x):
        """ω t + k.x + θ with a trailing mode axis."""
        return np.multiply.outer(t, self.omega) + x @ self.k.T + self.theta

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            # common case: one time, many points
            x = np.asarray(x, dtype=float)
            base = self.omega * float(t) + self.theta
            flat = x.reshape(-1, self.d)
            out = np.empty(flat.shape[0])
            step = max(1, _EVAL_CHUNK // max(self.J, 1))
            for s in range(0, flat.shape[0], step):
                out[s:s + step] = np.cos(flat[s:s + step] @ self.k.T + base) @ self.amp
            return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])
        t, x, shape = _split_points(t, x, self.d)
        ft = t.reshape(-1)
        fx = x.reshape(-1, self.d)
        out = np.empty(ft.size)
        step = max(1, _EVAL_CHUNK // max(self.J, 1))
        for s in range(0, ft.size, step):
            out[s:s + step] = np.cos(self.phases(ft[s:s + step], fx[s:s + step])) @ self.amp
        return out.reshape(shape)


def constant_field(c: float, d: int) -> HarmonicField:
    """The single mode ω = 0, k = 0, θ = 0 with amplitude c, i.e. V ≡ c."""
    return HarmonicField(np.zeros(1), np.zeros((1, d)), np.array([float(c)]), np.zeros(1))


def _sample_spectrum(model: CovarianceModel, n: int, gen: np.random.Generator):
    """Draw n frequencies (ξ0, ξ) from R̂ / ((2π)^{d+1} A)."""
    d = model.d
    if model.separable:
        # inverse-transform per coordinate
        u = gen.random((n, d + 1))
        z = special.ndtri(u)
        return z[:, 0] / model.ell_t, z[:, 1:] / model.ell_x
    tab = model._table
    xi0, rho = tab["xi0"], tab["rho"]
    # cell masses of the radial density 2 S_{d-1} ρ^{d-1} R̂ on the table
    c0 = 0.5 * (xi0[1:] + xi0[:-1])
    cr = 0.5 * (rho[1:] + rho[:-1])
    dens = np.clip(tab["spline"](c0, cr), 0.0, None) * cr[None, :] ** (d - 1)
    mass = dens * np.diff(xi0)[:, None] * np.diff(rho)[None, :]
    cdf = np.cumsum(mass.ravel())
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, gen.random(n), side="right")
    cells = np.minimum(cells, cdf.size - 1)
    i0, ir = np.divmod(cells, cr.size)
    w0 = xi0[i0] + gen.random(n) * (xi0[i0 + 1] - xi0[i0])
    wr = rho[ir] + gen.random(n) * (rho[ir + 1] - rho[ir])
    w0 *= np.where(gen.random(n) < 0.5, -1.0, 1.0)
    direction = gen.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return w0, wr[:, None] * direction


def synth_harmonic(model: CovarianceModel, J: int, stream: RngStream) -> HarmonicField:
    """Random-phase cosine sum whose ensemble covariance is R for every J."""
    if J < 1:
        raise DomainError("J must be >= 1")
    gen = stream.generator()
    omega, k = _sample_spectrum(model, J, gen)
    theta = 2.0 * math.pi * gen.random(J)
    amp = np.full(J, math.sqrt(2.0 * model.amplitude / J))
    return HarmonicField(omega, k, amp, theta, model)


# ---------------------------------------------------------------------------
# grid backend

@dataclass(frozen=True)
class GridSpec:
    """Periodic lattice: n_t x n_x^d nodes with spacings dt, dx."""

    n_t: int
    n_x: int
    dt: float
    dx: float
    d: int

    def __post_init__(self):
        if min(self.n_t, self.n_x) < 2 or not (self.dt > 0 and self.dx > 0):
            raise DomainError("grid needs >= 2 nodes per axis and positive spacings")

    @property
    def shape(self):
        return (self.n_t,) + (self.n_x,) * self.d

    @property
    def periods(self):
        return self.n_t * self.dt, self.n_x * self.dx

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @classmethod
    def for_model(cls, model: CovarianceModel, periods=16.0, spacing=1.0 / 8.0,
                  max_bytes=1 << 30) -> "GridSpec":
        """Lattice with periods ``periods``·ℓ and spacings ``spacing``·ℓ per axis."""
        n_t = int(round(periods / spacing))
        spec = cls(n_t, n_t, spacing * model.ell_t, spacing * model.ell_x, model.d)
        if 16 * spec.size > max_bytes:
            raise BudgetError(f"grid {spec.shape} needs {16 * spec.size / 2**20:.0f} MiB "
                              f"(limit {max_bytes / 2**20:.0f} MiB)")
        return spec

    def to_dict(self):
        return {"n_t": self.n_t, "n_x": self.n_x, "dt": self.dt, "dx": self.dx, "d": self.d}


def _lattice_lags(n, h):
    j = np.arange(n)
    return np.where(j <= n // 2, j, j - n) * h


def lattice_covariance(model: CovarianceModel, grid: GridSpec, images: int = 1):
    """Periodization of R on the lattice lags (nearest ``images`` copies per axis)."""
    if grid.d != model.d:
        raise DomainError("grid and model dimensions differ")
    T, L = grid.periods
    lt = _lattice_lags(grid.n_t, grid.dt)
    lx = _lattice_lags(grid.n_x, grid.dx)
    shifts = np.arange(-images, images + 1)
    out = np.zeros(grid.shape)
    # sum over image shifts of every axis; the separable model factorizes
    if model.separable:
        ct = sum(np.exp(-0.5 * ((lt + s * T) / model.ell_t) ** 2) for s in shifts)
        cx = sum(np.exp(-0.5 * ((lx + s * L) / model.ell_x) ** 2) for s in shifts)
        out = model.amplitude * ct.reshape((-1,) + (1,) * grid.d)
        for axis in range(grid.d):
            shape = [1] * (grid.d + 1)
            shape[axis + 1] = -1
            out = out * cx.reshape(shape)
        return out
    mesh = np.meshgrid(lt, *([lx] * grid.d), indexing="ij")
    for combo in np.ndindex(*(len(shifts),) * (grid.d + 1)):
        tt = mesh[0] + shifts[combo[0]] * T
        r2 = sum((mesh[a + 1] + shifts[combo[a + 1]] * L) ** 2 for a in range(grid.d))
        out += model.radial(tt, np.sqrt(r2))
    return out


def discrete_spectrum(model: CovarianceModel, grid: GridSpec, images: int = 1):
    """Eigenvalues of the lattice covariance (real DFT of the periodized R)."""
    return np.fft.fftn(lattice_covariance(model, grid, images)).real


def _checked_spectrum(model, grid):
    lam = discrete_spectrum(model, grid)
    top = lam.max()
    if lam.min() < -1e-9 * top:
        raise SynthesisError(f"discrete spectrum has entries down to {lam.min():.3e} "
                             f"(max {top:.3e}); enlarge the periods")
    return np.clip(lam, 0.0, None)


@dataclass(frozen=True, eq=False)
class GridField:
    grid: GridSpec
    values: np.ndarray
    model: CovarianceModel | None = None
    seed: dict = dc_field(default_factory=dict)
    backend = "grid"

    @property
    def d(self) -> int:
        return self.grid.d

    def __call__(self, t, x):
        t, x, shape = _split_points(t, x, self.d)
        g = self.grid
        coords = [t.reshape(-1) / g.dt] + [x.reshape(-1, self.d)[:, a] / g.dx for a in range(self.d)]
        sizes = g.shape
        base, frac = [], []
        for c, n in zip(coords, sizes):
            f = np.floor(c)
            base.append(np.mod(f.astype(np.int64), n))
            frac.append(c - f)
        out = np.zeros(coords[0].shape)
        for corner in np.ndindex(*(2,) * (self.d + 1)):
            idx = tuple(np.where(bit, (b + 1) % n, b) for bit, b, n in zip(corner, base, sizes))
            w = np.ones_like(out)
            for bit, fr in zip(corner, frac):
                w = w * (fr if bit else 1.0 - fr)
            out += w * self.values[idx]
        return out.reshape(shape)


def synth_grid_pair(model: CovarianceModel, grid: GridSpec, stream: RngStream,
                    single: bool = False, lam=None):
    """Two independent Gaussian fields from one complex FFT.

    With ``single=True`` the normals and the FFT run in single precision
    (about twice as fast; values are returned as float64). ``lam`` lets a
    caller reuse a precomputed discrete spectrum.
    """
    lam = _checked_spectrum(model, grid) if lam is None else lam
    gen = stream.generator()
    dtype = np.float32 if single else np.float64
    # entries below the FFT roundoff of the spectrum itself carry no signal;
    # drawing normals only for the rest is several times faster
    keep = np.flatnonzero(lam > SPECTRAL_FLOOR * lam.max())
    z = gen.standard_normal((2, keep.size), dtype=dtype)
    w = np.zeros(grid.size, dtype=np.complex64 if single else np.complex128)
    w[keep] = np.sqrt(lam.ravel()[keep] / grid.size).astype(dtype) * (z[0] + 1j * z[1])
    y = sfft.fftn(w.reshape(grid.shape), overwrite_x=True)
    seed = {"master_seed": stream.master_seed, "stream_id": stream.stream_id}
    return (GridField(grid, y.real.astype(float), model, {**seed, "part": 0}),
            GridField(grid, y.imag.astype(float), model, {**seed, "part": 1}))


def synth_grid(model: CovarianceModel, grid: GridSpec, stream: RngStream) -> GridField:
    """Mean-zero Gaussian lattice field with covariance the periodized R."""
    return synth_grid_pair(model, grid, stream)[0]


def grid_spectrum(model: CovarianceModel, grid: GridSpec):
    """Clipped discrete spectrum, validated for synthesis."""
    return _checked_spectrum(model, grid)


_MAGIC = b"SCNGRID1"


def save_grid(field: GridField, path) -> None:
    """Binary container: magic, u64 header length, JSON header, f64 LE row-major data."""
    header = json.dumps({
        "model": field.model.to_dict() if field.model else None,
        "grid": field.grid.to_dict(),
        "seed": field.seed,
        "dtype": "<f8",
        "order": "C",
        "shape": list(field.grid.shape),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_grid(path) -> GridField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise DomainError(f"{path}: not a grid field file")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + n])
    grid = GridSpec(**header["grid"])
    values = np.frombuffer(blob[16 + n:], dtype="<f8").reshape(grid.shape).astype(float)
    model = CovarianceModel.from_dict(header["model"]) if header["model"] else None
    return GridField(grid, values, model, header["seed"])


# ---------------------------------------------------------------------------
# hybrid backend

@dataclass(frozen=True, eq=False)
class HybridField:
    """Gaussian-in-time, harmonic-in-space field on a time lattice.

    Node i sits at time tau0 + i * dtau; between nodes the temporal
    processes are linearly interpolated, outside the lattice evaluation fails.
    """

    tau0: float
    dtau: float
    a: np.ndarray          # (n_tau, J)
    b: np.ndarray          # (n_tau, J)
    k: np.ndarray          # (J, d)
    scale: float           # √(A/J)
    model: CovarianceModel | None = None
    backend = "hybrid"

    @property
    def d(self) -> int:
        return self.k.shape[1]

    @property
    def J(self) -> int:
        return self.k.shape[0]

    @property
    def n_tau(self) -> int:
        return self.a.shape[0]

    def _coeffs(self, t):
        u = (np.asarray(t, dtype=float) - self.tau0) / self.dtau
        if np.any(u < -1e-9) or np.any(u > self.n_tau - 1 + 1e-9):
            raise DomainError("time outside the hybrid field's lattice")
        i = np.clip(np.floor(u + 1e-9).astype(np.int64), 0, self.n_tau - 1)
        w = np.clip(u - i, 0.0, 1.0)
        j = np.minimum(i + 1, self.n_tau - 1)
        wa = (1 - w)[..., None]
        wb = w[..., None]
        return wa * self.a[i] + wb * self.a[j], wa * self.b[i] + wb * self.b[j]

    def at_node(self, i: int, x):
        """V at lattice node i for points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        ph = x @ self.k.T
        return self.scale * (np.cos(ph) @ self.a[i] + np.sin(ph) @ self.b[i])

    def __call__(self, t, x):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            x = np.asarray(x, dtype=float)
            ca, cb = self._coeffs(t)
            ph = x @ self.k.T
            out = self.scale * (np.cos(ph) @ ca + np.sin(ph) @ cb)
            return out if out.ndim else float(out)
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DomainError(f"point dimension {x.shape[-1]} does not match field dimension {self.d}")
        # coefficients on t's own shape, broadcast against the points later
        ca, cb = self._coeffs(t)
        shape = np.broadcast_shapes(t.shape, x.shape[:-1])
        if len(shape) == 0:
            return float(self.scale * (np.cos(x @ self.k.T) @ ca + np.sin(x @ self.k.T) @ cb))
        x = np.broadcast_to(x, shape + (self.d,))
        ca = np.broadcast_to(ca, shape + (self.J,))
        cb = np.broadcast_to(cb, shape + (self.J,))
        out = np.empty(shape)
        rows = max(1, _EVAL_CHUNK // max(self.J * int(np.prod(shape[1:])), 1))
        for s in range(0, shape[0], rows):
            ph = x[s:s + rows] @ self.k.T
            c = np.cos(ph)
            np.sin(ph, out=ph)
            c *= ca[s:s + rows]
            ph *= cb[s:s + rows]
            c += ph
            out[s:s + rows] = c.sum(axis=-1)
        return self.scale * out


def _temporal_embedding(model, dtau, n_tau):
    m = 1 << int(math.ceil(math.log2(max(2 * n_tau, 2 * (n_tau + math.ceil(12 * model.ell_t / dtau)), 16))))
    lags = _lattice_lags(m, dtau)
    c = np.exp(-0.5 * (lags / model.ell_t) ** 2)
    lam = np.fft.fft(c).real
    if lam.min() < -1e-9 * lam.max():
        raise SynthesisError("temporal circulant embedding is not nonnegative")
    return m, np.clip(lam, 0.0, None)


def synth_hybrid(model: CovarianceModel, J: int, tau0: float, dtau: float, n_tau: int,
                 stream: RngStream) -> HybridField:
    """Hybrid field on the time lattice tau0 + i·dtau, i < n_tau.

    Spatial wave vectors are stratified in radius: mode j takes a radius in
    the j-th of J equal-probability shells of the spatial spectrum and a
    uniform direction. Stratification keeps the ensemble covariance exact.
    """
    if not model.separable:
        raise UnsupportedBackendError("the hybrid backend needs a separable model")
    if J < 1 or n_tau < 1 or not dtau > 0:
        raise DomainError("hybrid field needs J >= 1, n_tau >= 1, dtau > 0")
    gen = stream.generator()
    d = model.d
    u = (np.arange(J) + gen.random(J)) / J
    radius = np.sqrt(stats.chi2.ppf(u, d)) / model.ell_x
    direction = gen.standard_normal((J, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    k = radius[:, None] * direction
    m, lam = _temporal_embedding(model, dtau, n_tau)
    z = gen.standard_normal((J, m)) + 1j * gen.standard_normal((J, m))
    y = np.fft.fft(np.sqrt(lam / m) * z, axis=1)[:, :n_tau]
    a = np.ascontiguousarray(y.real.T)
    b = np.ascontiguousarray(y.imag.T)
    return HybridField(float(tau0), float(dtau), a, b, k, math.sqrt(model.amplitude / J), model)


# ---------------------------------------------------------------------------

def field_eval(sampler, t, x):
    """V(t, x) for any backend."""
    return sampler(t, x)


def empirical_cov(factory, lags, n_realizations: int, stream: RngStream, base=None):
    """Sample covariance of V(base) and V(base + lag) over independent realizations.

    ``factory(stream)`` returns a sampler. Returns rows
    ``(lag_t, lag_x, estimate, stderr)``; the estimate is the unbiased sample
    covariance and the stderr comes from the spread of the centred products.
    """
    if n_realizations < 100:
        raise DomainError("empirical covariance needs >= 100 realizations")
    lags = [(float(t), np.asarray(x, dtype=float)) for t, x in lags]
    d = lags[0][1].size
    b_t, b_x = (0.0, np.zeros(d)) if base is None else (float(base[0]), np.asarray(base[1], float))
    pts_t = np.array([b_t] + [b_t + t for t, _ in lags])
    pts_x = np.stack([b_x] + [b_x + x for _, x in lags])
    vals = np.empty((n_realizations, len(lags) + 1))
    for i in range(n_realizations):
        sampler = factory(stream.child(i))
        vals[i] = sampler(pts_t, pts_x)
    return cov_rows(vals, lags)


def cov_rows(vals: np.ndarray, lags):
    """Covariance rows from samples; column 0 is the base point, column j lag j."""
    n = vals.shape[0]
    centred = vals - vals.mean(axis=0)
    rows = []
    for j, (t, x) in enumerate(lags, start=1):
        prod = centred[:, 0] * centred[:, j]
        est = prod.sum() / (n - 1)
        se = prod.std(ddof=1) / math.sqrt(n)
        rows.append((float(t), np.asarray(x, dtype=float), float(est), float(se)))
    return rows


def grid_site_samples(model: CovarianceModel, grid: GridSpec, t, x, n_realizations: int,
                      stream: RngStream, single: bool = True) -> np.ndarray:
    """Values of n independent grid fields at fixed points, shape (n, n_points).

    Fields come in pairs from one complex FFT; pair p uses stream.child(p).
    """
    lam = _checked_spectrum(model, grid)
    out = np.empty((n_realizations, len(t)))
    for p in range(-(-n_realizations // 2)):
        a, b = synth_grid_pair(model, grid, stream.child(p), single=single, lam=lam)
        out[2 * p] = a(t, x)
        if 2 * p + 1 < n_realizations:
            out[2 * p + 1] = b(t, x)
    return out


def wick_four_point(samples: np.ndarray, cov: np.ndarray):
    """Empirical E[V1 V2 V3 V4] with stderr against the Wick prediction.

    ``samples`` is (n, 4) values at four sites, ``cov`` the 4x4 covariance.
    """
    prod = np.prod(samples, axis=1)
    est = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(prod.size))
    wick = float(cov[0, 1] * cov[2, 3] + cov[0, 2] * cov[1, 3] + cov[0, 3] * cov[1, 2])
    return est, se, wick


# ---------------------------------------------------------------------------
# sampler factories: called as factory(model, lattice, stream) where lattice
# is (tau0, dtau, n_tau), the time nodes a solver will visit

@dataclass(frozen=True)
class HarmonicFactory:
    J: int = 64

    def __call__(self, model, lattice, stream):
        return synth_harmonic(model, self.J, stream)


@dataclass(frozen=True)
class HybridFactory:
    J: int = 16

    def __call__(self, model, lattice, stream):
        tau0, dtau, n_tau = lattice
        return synth_hybrid(model, self.J, tau0, dtau, n_tau, stream)


@dataclass(frozen=True)
class ConstantFactory:
    c: float = 0.0

    def __call__(self, model, lattice, stream):
        return constant_field(self.c, model.d)


def make_factory(backend: str, J: int | None = None):
    """Factory by backend name: harmonic, hybrid or zero."""
    if backend == "harmonic":
        return HarmonicFactory(J or 64)
    if backend == "hybrid":
        return HybridFactory(J or 16)
    if backend == "zero":
        return ConstantFactory(0.0)
    raise UnsupportedBackendError(f"no factory for backend {backend!r}")
