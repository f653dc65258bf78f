"""
Random walk in random scenery
=============================

X_eps = eps * int_0^{1/eps^2} V(s, eps^beta B_s) ds is asymptotically normal
with variance sigma^2 = 2 sqrt(pi/2) in the G2 regime (alpha = 3). We split
the integral into big blocks, small gaps and a tail and watch the gaps and
tail shrink as eps decreases.
"""

import math

import numpy as np

from scenery_homog.covariance import CovarianceModel
from scenery_homog.experiments import scenery_sampler
from scenery_homog.field import HybridFactory
from scenery_homog.numerics import RngStream
from scenery_homog.paths import PathEnsemble, PathSpec, SceneryRegime, block_split, default_dt

model = CovarianceModel()
sigma2 = 2 * math.sqrt(math.pi / 2)
root = RngStream(0)

for i, eps in enumerate((0.4, 0.2)):
    reg = SceneryRegime("G2", 3.0, eps)
    dt = default_dt(reg, model)
    n = int(round(reg.horizon(1.0) / dt))
    second, gaps = [], []
    for j in range(8):
        v = scenery_sampler(HybridFactory(4), model, reg, dt, n, root.child(i, j, 0))
        paths = PathEnsemble(PathSpec(3, reg.horizon(1.0), dt, 1000, root.child(i, j, 1)))
        split = block_split(v, paths, reg, 0.4, 0.2, 1.0)
        second.append(np.mean(split.total**2))
        gaps.append(np.mean(split.II**2) + np.mean(split.III**2))
    print(f"eps {eps}: E X^2 = {np.mean(second):.3f} (target {sigma2:.3f}), "
          f"E II^2 + E III^2 = {np.mean(gaps):.3f}, {split.N} blocks")
