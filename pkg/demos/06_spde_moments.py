"""
The alpha = infinity regime
===========================

When the potential decorrelates in time much faster than in space, u_eps
does not homogenize to a deterministic limit: it converges in law to the
solution of a stochastic heat equation. We compare annealed moments of
u_eps with Monte Carlo moments of the limit.
"""

import math

import numpy as np

from scenery_homog.covariance import CovarianceModel
from scenery_homog.field import HybridFactory
from scenery_homog.fk import InitialData
from scenery_homog.numerics import RngStream
from scenery_homog.spde import MollifierSpec, MomentSpec, cauchy_variance, limit_moment, moment_compare

model = CovarianceModel()
one = InitialData("constant", c=1.0)

# the mollified noise: its variance along a frozen path tends to R(0) t
for e in (1e-1, 1e-2, 1e-3):
    v = cauchy_variance(model, MollifierSpec(e), np.zeros((1001, 3)), 1.0)
    print(f"eps_moll {e:.0e}: variance {v:.5f} (limit {math.sqrt(2 * math.pi):.5f})")

# a single copy has a deterministic exponent
print("\nE u =", limit_moment(model, one, MomentSpec(1, 0, 10, 1.0, (0, 0, 0), RngStream(0))).mean.real,
      " exact", math.exp(-math.sqrt(2 * math.pi) / 2))
m = limit_moment(model, one, MomentSpec(1, 1, 4000, 1.0, (0, 0, 0), RngStream(1)))
print(f"E |u|^2 = {m.mean.real:.4f} +- {m.stderr.real:.4f}")

f = InitialData("cosine_wave", kappa=(1.0, 0.0, 0.0))
rows = moment_compare(HybridFactory(8), model, f, [(1, 1)], [0.2, 0.1], n_paths=400, n_fields=10,
                      n_limit_tuples=4000)
for r in rows:
    print(f"eps {r['epsilon']}: moment {r['re_mean']:.4f} +- {r['re_stderr']:.4f}, limit {r['u0_ref']:.4f}")
