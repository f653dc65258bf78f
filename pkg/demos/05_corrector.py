"""
The corrector and the martingale decomposition
==============================================

On a harmonic field the resolvent equation (lambda - L) Phi = V is solved
mode by mode, so Phi is exact. Along a Brownian path the additive functional
X splits into a remainder R and a martingale M; the leftover is pure time
discretization and shrinks as dt is halved.
"""

import numpy as np

from scenery_homog.covariance import CovarianceModel
from scenery_homog.effective import CorrectorSpec, corrector_norm, corrector_residual, martingale_decompose, sigma2_lambda
from scenery_homog.field import synth_harmonic
from scenery_homog.numerics import RngStream
from scenery_homog.paths import PathEnsemble, PathSpec, SceneryRegime

model = CovarianceModel()

# the lambda scan: lambda <Phi, Phi> -> 0 while sigma_lambda^2 -> sigma^2 = 4
for lam in (1e-1, 1e-2, 1e-3, 1e-4):
    spec = CorrectorSpec(np.sqrt(lam), 1.0, lam)
    print(f"lambda {lam:.0e}: norm {corrector_norm(model, spec):.5f}  sigma2_lambda {sigma2_lambda(model, spec):.5f}")

fld = synth_harmonic(model, 64, RngStream(0))
spec = CorrectorSpec(0.2, 1.0)
pts = np.random.default_rng(1).uniform(-5, 5, (20, 4))
print("\nmax residual of the resolvent equation:",
      np.max(np.abs(corrector_residual(fld, spec, pts[:, 0], pts[:, 1:]))))

reg = SceneryRegime("LE2", 1.0, 0.2)
fine = PathEnsemble(PathSpec(3, reg.horizon(1.0), 0.25 / 8, 100, RngStream(2)))
for k in (8, 4, 2, 1):
    res = martingale_decompose(fld, fine.coarsen(k), spec, 1.0)
    print(f"dt {0.25 / 8 * k:.4f}: RMS(X - R - M) = {np.sqrt(np.mean(res.residual**2)):.4f}, "
          f"E R^2 = {np.mean(res.R_term**2):.4f}")
