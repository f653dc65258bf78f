"""Brownian path ensembles and Brownian motion in random scenery.

Paths are generated in fixed blocks of ``PATH_BLOCK`` rows, block ``b`` drawn
from ``stream.child(b)``. Path ``i`` therefore depends only on the stream,
the step grid and ``i``, whatever the ensemble size or worker count.

Scenery regimes, all written as X = ε ∫_0^{t/ε²} V(a s, b B_s) ds:

=====  ==========  ===========
tag    a           b
=====  ==========  ===========
G2     1           ε^β, β = 1 − 2/α
LE2    ε^{2−α}     1
INF    1           ε
=====  ==========  ===========

Here ε is the parameter of the rescaled functional. Starting from the
macroscopic scale ε₀ it is ε₀^{α/2} for G2, ε₀ for LE2 and ε₀^{1/2} for INF
(see ``SceneryRegime.from_macroscopic``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel
from .errors import BudgetError, DomainError
from .numerics import RngStream
from .parallel import pmap

__all__ = [
    "PATH_BLOCK",
    "PathSpec",
    "PathEnsemble",
    "SceneryRegime",
    "SceneryResult",
    "BlockSplit",
    "sample_paths",
    "default_dt",
    "scenery_integral",
    "block_split",
    "ergodic_average",
    "double_integral_functional",
    "midpoints",
]

PATH_BLOCK = 256
MAX_STEPS = 10**8
MAX_BYTES = 1 << 30
CHUNK_STEPS = 1024


@dataclass(frozen=True)
class PathSpec:
    d: int
    horizon: float
    dt: float
    n_paths: int
    stream: RngStream

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if not self.horizon > 0:
            raise DomainError("horizon must be > 0")
        if self.n_paths < 1 or self.d < 1:
            raise DomainError("need n_paths >= 1 and d >= 1")
        if self.horizon / self.dt > MAX_STEPS:
            raise BudgetError(f"horizon/dt = {self.horizon / self.dt:.3g} exceeds {MAX_STEPS:.0e}")

    @property
    def n_steps(self) -> int:
        r = self.horizon / self.dt
        n = round(r)
        return int(n) if abs(n - r) <= 1e-9 * max(r, 1.0) else int(math.ceil(r))

    @property
    def n_blocks(self) -> int:
        return -(-self.n_paths // PATH_BLOCK)


@dataclass(frozen=True)
class PathEnsemble:
    """Lazily generated ensemble; ``stride`` > 1 observes every stride-th node.

    Increments are drawn time-major, one (PATH_BLOCK, d) slab per step, so a
    block can be streamed in time chunks without holding the whole path.
    """

    spec: PathSpec
    stride: int = 1

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n_paths(self) -> int:
        return self.spec.n_paths

    @property
    def dt(self) -> float:
        return self.spec.dt * self.stride

    @property
    def n_steps(self) -> int:
        return self.spec.n_steps // self.stride

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def block_rows(self, b: int) -> int:
        return min(PATH_BLOCK, self.spec.n_paths - b * PATH_BLOCK)

    def chunks(self, b: int, n_steps: int | None = None):
        """Yield (first step, positions) for block ``b`` in time chunks.

        Positions have shape (rows, k + 1, d) and include the chunk's left
        node, so consecutive chunks share one node.
        """
        spec = self.spec
        gen = spec.stream.child(b).generator()
        rows = self.block_rows(b)
        total = self.n_steps if n_steps is None else min(n_steps, self.n_steps)
        pos = np.zeros((rows, spec.d))
        sq = math.sqrt(spec.dt)
        done = 0
        while done < total:
            k = min(CHUNK_STEPS, total - done)
            fine = gen.standard_normal((k * self.stride, PATH_BLOCK, spec.d))[:, :rows]
            fine *= sq
            np.cumsum(fine, axis=0, out=fine)
            fine += pos
            obs = fine[self.stride - 1:: self.stride]
            out = np.empty((rows, k + 1, spec.d))
            out[:, 0] = pos
            out[:, 1:] = obs.transpose(1, 0, 2)
            yield done, out
            pos = obs[-1].copy()
            done += k

    def block(self, b: int, n_steps: int | None = None) -> np.ndarray:
        """Paths of block ``b``, shape (rows, n_steps + 1, d)."""
        parts = [c if i == 0 else c[:, 1:] for i, (_, c) in enumerate(self.chunks(b, n_steps))]
        return np.concatenate(parts, axis=1)

    def blocks(self, n_steps: int | None = None):
        for b in range(self.spec.n_blocks):
            yield b * PATH_BLOCK, self.block(b, n_steps)

    @property
    def values(self) -> np.ndarray:
        nbytes = 8 * self.n_paths * (self.n_steps + 1) * self.d
        if nbytes > MAX_BYTES:
            raise BudgetError(f"ensemble needs {nbytes / 2**20:.0f} MiB; iterate blocks instead")
        return np.concatenate([blk for _, blk in self.blocks()], axis=0)

    def coarsen(self, factor: int) -> "PathEnsemble":
        if factor < 1 or self.spec.n_steps % (self.stride * factor):
            raise DomainError("coarsening factor must divide the step count")
        return PathEnsemble(self.spec, self.stride * factor)


def sample_paths(spec: PathSpec) -> PathEnsemble:
    return PathEnsemble(spec)


def midpoints(paths: np.ndarray) -> np.ndarray:
    """Positions at step midpoints of the piecewise-linear path."""
    return 0.5 * (paths[:, 1:] + paths[:, :-1])


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneryRegime:
    tag: str
    alpha: float
    epsilon: float

    def __post_init__(self):
        if self.tag not in ("G2", "LE2", "INF"):
            raise DomainError(f"unknown scenery regime {self.tag!r}")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be > 0")
        if self.tag == "G2" and not self.alpha > 2:
            raise DomainError("G2 needs alpha > 2")
        if self.tag == "LE2" and not 0 <= self.alpha <= 2:
            raise DomainError("LE2 needs 0 <= alpha <= 2")

    @classmethod
    def from_macroscopic(cls, alpha: float, eps: float) -> "SceneryRegime":
        """Regime of the rescaled functional for the macroscopic scale ``eps``."""
        if math.isinf(alpha):
            return cls("INF", math.inf, math.sqrt(eps))
        if alpha > 2:
            return cls("G2", alpha, eps ** (alpha / 2))
        return cls("LE2", alpha, eps)

    @property
    def beta(self) -> float:
        return 1.0 - 2.0 / self.alpha if self.tag == "G2" else math.nan

    @property
    def time_scale(self) -> float:
        return self.epsilon ** (2 - self.alpha) if self.tag == "LE2" else 1.0

    @property
    def space_scale(self) -> float:
        if self.tag == "G2":
            return self.epsilon ** self.beta
        return self.epsilon if self.tag == "INF" else 1.0

    def horizon(self, t: float) -> float:
        return t / self.epsilon**2


def default_dt(regime: SceneryRegime, model: CovarianceModel, t: float = 1.0) -> float:
    """An eighth of the fastest scale of the integrand, rounded to divide t/ε²."""
    scales = [model.ell_t / regime.time_scale, (model.ell_x / regime.space_scale) ** 2]
    dt = min(scales) / 8.0
    horizon = regime.horizon(t)
    return horizon / math.ceil(horizon / dt - 1e-9)


def _steps_to(paths: PathEnsemble, horizon: float) -> int:
    r = horizon / paths.dt
    n = round(r)
    if abs(n - r) > 1e-6 * max(r, 1.0):
        raise DomainError(f"horizon {horizon} is not on the path grid (dt={paths.dt})")
    if n > paths.n_steps:
        raise DomainError(f"paths cover {paths.horizon}, need {horizon}")
    return int(n)


def _scenery_chunks(sampler, paths, b, regime, n):
    """Yield (first step, terms) with terms[:, i] = V(a s_mid, b B_mid) per step."""
    a, sc = regime.time_scale, regime.space_scale
    dt = paths.dt
    for start, pos in paths.chunks(b, n):
        mid = midpoints(pos)
        times = a * (start + np.arange(mid.shape[1]) + 0.5) * dt
        yield start, sampler(times[None, :], sc * mid)


def _scenery_block(sampler, paths, b, regime, n):
    acc = np.zeros(paths.block_rows(b))
    for _, terms in _scenery_chunks(sampler, paths, b, regime, n):
        acc += terms.sum(axis=1)
    return regime.epsilon * paths.dt * acc


@dataclass
class SceneryResult:
    values: np.ndarray
    regime: SceneryRegime
    t: float
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def variance(self) -> float:
        return float(self.values.var(ddof=1))

    def charfun(self, c) -> np.ndarray:
        """Empirical E exp(i c X) on a grid of c."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return np.exp(1j * np.multiply.outer(c, self.values)).mean(axis=-1)


def scenery_integral(sampler, paths: PathEnsemble, regime: SceneryRegime, t: float,
                     workers=None) -> SceneryResult:
    """X_ε(t) per path by the midpoint rule on the path grid."""
    n = _steps_to(paths, regime.horizon(t))
    parts = pmap(_scenery_block, [(sampler, paths, b, regime, n) for b in range(paths.spec.n_blocks)],
                 workers)
    return SceneryResult(np.concatenate(parts), regime, t, {"dt": paths.dt, "n_steps": n})


@dataclass
class BlockSplit:
    I: np.ndarray
    II: np.ndarray
    III: np.ndarray
    N: int
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.I + self.II + self.III


def _block_labels(n, dt, eps, gamma1, gamma2, t):
    horizon = t / eps**2
    big, small = eps ** (-gamma1), eps ** (-gamma2)
    delta = big + small
    N = int(math.floor(horizon / delta + 1e-12))
    labels = np.full(n, 2, dtype=np.int8)          # tail by default
    for k in range(N):
        i0 = int(round(k * delta / dt))
        i1 = int(round((k * delta + big) / dt))
        i2 = int(round((k + 1) * delta / dt))
        labels[i0:i1] = 0
        labels[i1:i2] = 1
    return labels, N, delta


def _block_split_block(sampler, paths, b, regime, n, labels):
    acc = np.zeros((paths.block_rows(b), 3))
    onehot = np.eye(3)[labels]
    for start, terms in _scenery_chunks(sampler, paths, b, regime, n):
        acc += terms @ onehot[start:start + terms.shape[1]]
    return regime.epsilon * paths.dt * acc


def block_split(sampler, paths: PathEnsemble, regime: SceneryRegime, gamma1: float,
                gamma2: float, t: float, workers=None) -> BlockSplit:
    """Split the G2 scenery sum over blocks I_k, gaps J_k and the tail.

    I_k = [(k−1)Δt, (k−1)Δt + ε^{−γ1}], J_k = [(k−1)Δt + ε^{−γ1}, kΔt] with
    Δt = ε^{−γ1} + ε^{−γ2}, k = 1..N, N = floor(t / (ε² Δt)); the tail is
    [NΔt, t/ε²]. Block boundaries are rounded to grid nodes so I + II + III
    equals the scenery sum exactly.
    """
    if regime.tag != "G2":
        raise DomainError("block splitting is defined for the G2 regime")
    if not 0 < gamma2 < gamma1 < 2:
        raise DomainError("need 0 < gamma2 < gamma1 < 2")
    n = _steps_to(paths, regime.horizon(t))
    labels, N, delta = _block_labels(n, paths.dt, regime.epsilon, gamma1, gamma2, t)
    parts = pmap(_block_split_block,
                 [(sampler, paths, b, regime, n, labels) for b in range(paths.spec.n_blocks)], workers)
    arr = np.concatenate(parts)
    meta = {"delta_t": delta, "gamma1": gamma1, "gamma2": gamma2,
            "gamma1_exceeds_half": gamma1 >= 0.5}
    return BlockSplit(arr[:, 0], arr[:, 1], arr[:, 2], N, meta)


def ergodic_average(sampler, paths: PathEnsemble, epsilon: float, alpha: float, T_run,
                    workers=None) -> np.ndarray:
    """Time average of V(ε^{2−α} s, B_s) over [0, T_run] per path.

    ``T_run`` may be a sequence; the result then has one column per value.
    """
    if alpha > 2:
        raise DomainError("the environment process average needs alpha <= 2")
    runs = np.atleast_1d(np.asarray(T_run, dtype=float))
    n_run = [_steps_to(paths, T) for T in runs]
    regime = SceneryRegime("LE2", alpha, epsilon)
    n = max(n_run)
    out = []
    for b in range(paths.spec.n_blocks):
        acc = np.zeros(paths.block_rows(b))
        res = np.empty((acc.size, len(n_run)))
        for start, terms in _scenery_chunks(sampler, paths, b, regime, n):
            c = acc[:, None] + np.cumsum(terms, axis=1)
            for j, k in enumerate(n_run):
                if start < k <= start + terms.shape[1]:
                    res[:, j] = c[:, k - start - 1] / k
            acc = c[:, -1]
        out.append(res)
    out = np.concatenate(out)
    return out[:, 0] if np.ndim(T_run) == 0 else out


def _r_cutoff(model: CovarianceModel) -> float:
    # beyond this time lag R(t, .) < 1e-16 R(0, 0) for the separable model
    return model.support if not model.separable else model.ell_t * math.sqrt(2 * 37.0)


def double_integral_functional(paths: PathEnsemble, model: CovarianceModel, epsilon: float, beta: float,
                        gamma: float, mode: str = "same_path", t: float = 1.0,
                        other: PathEnsemble | None = None, power: int = 2) -> np.ndarray:
    """Double time integrals of R along Brownian paths, per path.

    same_path:         ε^γ ∫_0^{ε^{−γ}} ∫_0^{ε^{−γ}} R(s − u, ε^β (B_s − B_u)) ds du
    independent_paths: ε^p ∫_0^{t/ε²} ∫_0^{t/ε²} |R(s − u, ε^β (B_s − W_u))| ds du

    with W the matching path of ``other``. The default p = 2 is the prefactor
    under which the functional is an expectation-bounded quantity that
    vanishes; p = 1 is accepted for comparison. Both double integrals use
    midpoint rules, truncated to time lags where R is numerically nonzero.
    """
    if not 0 < beta < 1 or not gamma > 0:
        raise DomainError("need beta in (0, 1) and gamma > 0")
    dt = paths.dt
    band = int(math.ceil(_r_cutoff(model) / dt))
    sc = epsilon**beta
    out = []
    if mode == "same_path":
        n = _steps_to(paths, epsilon ** (-gamma))
        for _, blk in paths.blocks(n):
            m = midpoints(blk)
            acc = model.radial(0.0, 0.0) * np.full(m.shape[0], float(n))
            for lag in range(1, min(band, n - 1) + 1):
                r = sc * np.linalg.norm(m[:, lag:] - m[:, :-lag], axis=-1)
                acc = acc + 2.0 * model.radial(lag * dt, r).sum(axis=1)
            out.append(epsilon**gamma * dt * dt * acc)
        return np.concatenate(out)
    if mode != "independent_paths":
        raise DomainError(f"unknown mode {mode!r}")
    if other is None or other.n_paths != paths.n_paths or other.dt != paths.dt:
        raise DomainError("independent_paths needs a second ensemble of the same shape")
    n = _steps_to(paths, t / epsilon**2)
    for (_, blk), (_, blk2) in zip(paths.blocks(n), other.blocks(n)):
        m = midpoints(blk)
        w = midpoints(blk2)
        acc = np.abs(model.radial(0.0, sc * np.linalg.norm(m - w, axis=-1))).sum(axis=1)
        for lag in range(1, min(band, n - 1) + 1):
            r1 = sc * np.linalg.norm(m[:, lag:] - w[:, :-lag], axis=-1)
            r2 = sc * np.linalg.norm(w[:, lag:] - m[:, :-lag], axis=-1)
            acc = acc + np.abs(model.radial(lag * dt, r1)).sum(axis=1) \
                + np.abs(model.radial(lag * dt, r2)).sum(axis=1)
        out.append(epsilon**power * dt * dt * acc)
    return np.concatenate(out)
