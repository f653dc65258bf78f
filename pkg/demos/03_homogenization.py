"""
Homogenization of the Feynman-Kac solution
==========================================

For each regime alpha we solve the equation with a random potential by
Monte Carlo over Brownian paths, average over field realizations and
compare with the damped heat flow u0. The error should shrink with eps.
Budgets here are small; the CLI default runs 10^4 paths x 20 fields.
"""

import math

from scenery_homog.covariance import CovarianceModel
from scenery_homog.field import HybridFactory
from scenery_homog.fk import InitialData, convergence_table

model = CovarianceModel()
f = InitialData("cosine_wave", kappa=(1.0, 0.0, 0.0))

for alpha in (3.0, 2.0, 1.0):
    rows = convergence_table(HybridFactory(8), model, f, alpha, [0.5, 0.35, 0.25],
                             n_paths=1000, n_fields=8, master_seed=int(alpha))
    print(f"\nalpha = {alpha:g}, u0 = {rows[0]['u0_ref']:.5f}")
    for r in rows:
        se = math.hypot(r["re_stderr"], r["im_stderr"])
        print(f"  eps {r['epsilon']:.2f}  u = {r['re_mean']:+.5f}{r['im_mean']:+.5f}i  "
              f"|u - u0| = {r['abs_err']:.5f} +- {se:.5f}  (dt {r['dt']:.3g})")
