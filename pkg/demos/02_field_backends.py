"""
Sampling the random potential
=============================

Three constructions of a stationary Gaussian-like field with covariance R:

* harmonic: a random-phase cosine sum, bounded, exact ensemble covariance;
* grid: an exact Gaussian lattice field from a circulant FFT;
* hybrid: Gaussian processes in time multiplying harmonic spatial modes.

We compare empirical covariances at a few lags against R itself.
"""

import numpy as np

from scenery_homog.covariance import CovarianceModel
from scenery_homog.field import GridSpec, cov_rows, grid_site_samples, make_factory
from scenery_homog.numerics import RngStream

model = CovarianceModel()
lags = [(0.5, np.zeros(3)), (0.0, np.array([1.0, 0, 0])), (1.0, np.array([0.5, 0.25, 0]))]
t = np.array([0.0] + [lt for lt, _ in lags])
x = np.stack([np.zeros(3)] + [lx for _, lx in lags])
n = 1000

samples = {}
for backend in ("harmonic", "hybrid"):
    fac = make_factory(backend, 16)
    root = RngStream(1)
    # the hybrid field lives on a time lattice; give it one covering [-2, 2]
    samples[backend] = np.array([fac(model, (-2.0, 4.0 / 64, 65), root.child(i))(t, x) for i in range(n)])

# grid fields come in pairs from one complex FFT
grid = GridSpec(32, 32, 0.25, 0.25, 3)
samples["grid"] = grid_site_samples(model, grid, t, x, n, RngStream(2))

print(f"{'backend':9s} {'lag_t':>6s} {'|lag_x|':>8s} {'estimate':>9s} {'stderr':>8s} {'R':>8s}")
for backend, vals in samples.items():
    for lt, lx, est, se in cov_rows(vals, lags):
        print(f"{backend:9s} {lt:6.2f} {np.linalg.norm(lx):8.3f} {est:9.4f} {se:8.4f} {float(model(lt, lx)):8.4f}")

# the harmonic field is bounded by the sum of its amplitudes
fld = make_factory("harmonic", 16)(model, None, RngStream(3))
print("\nharmonic sup bound:", fld.bound)
