"""
Effective damping rates
=======================

The homogenized solution is the heat flow of the initial data damped by
e^{-rho t}. rho depends on the regime of alpha and on the covariance R.
Here we compute it for the default separable model and for a tapered one.
"""

import math

from scenery_homog.covariance import CovarianceModel
from scenery_homog.effective import REGIMES, rho, sigma2_spectral

# unit separable Gaussian covariance in d = 3
sep = CovarianceModel("gaussian_separable", amplitude=1.0, ell_t=1.0, ell_x=1.0, d=3)

# a compactly supported variant: Gaussian times a Wendland taper of radius 3
tap = CovarianceModel("tapered_gaussian", 1.0, 1.0, 1.0, 3, taper_radius=3.0)

for name, m in (("separable", sep), ("tapered", tap)):
    print(f"\n{name}")
    for reg in REGIMES:
        c = rho(m, reg)
        line = f"  {reg:4s} rho = {c.rho:.10f}  (error {c.rho_error:.1e}, {c.n_evals} evals)"
        if reg != "G2":
            # the same number through the spectral representation
            line += f"   sigma2 spectral / 2 = {sigma2_spectral(m, reg) / 2:.10f}"
        print(line)

# closed forms for the separable case
print("\nclosed forms: G2", math.sqrt(math.pi / 2), " LT2", 2.0)

# u0 at t = 1, x = 0 for f = cos(x1): e^{-rho} e^{-1/2}
for reg in REGIMES:
    print(f"u0[{reg}] = {math.exp(-rho(sep, reg).rho - 0.5):.8f}")
