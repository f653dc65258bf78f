import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenery_homog.covariance import (CovarianceModel, r_eval, r_hat_eval, r_time_integral,
                                      radial_fourier_kernel, sup_envelope)
from scenery_homog.errors import DomainError
from scenery_homog.numerics import integrate_spectral


def test_r_eval_values(gauss):
    assert r_eval(gauss, 0.0, np.zeros(3)) == 1.0
    assert r_eval(gauss, 1.0, np.zeros(3)) == pytest.approx(math.exp(-0.5), rel=1e-14)


def test_taper_support(tapered):
    x = np.array([3.0, 0.1, 0.0])
    assert r_eval(tapered, 0.0, x) == 0.0


@given(st.floats(-4, 4), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_symmetry(t, a, b, c):
    m = CovarianceModel("tapered_gaussian", 2.0, 1.0, 0.7, 3, 2.5)
    x = np.array([a, b, c])
    assert float(m(t, x)) == pytest.approx(float(m(-t, -x)), abs=0, rel=0)
    assert float(m(t, x)) <= m.amplitude


def test_r_hat_separable_closed_form(gauss):
    assert r_hat_eval(gauss, 0.0, np.zeros(3)) == pytest.approx((2 * math.pi) ** 2, rel=1e-12)


def test_r_hat_numeric_oracle(gauss):
    # direct Riemann sum of R over a fine box, product of 1-D sums
    h = 0.01
    s = np.arange(-10, 10 + h, h)
    one = np.exp(-0.5 * s * s).sum() * h
    assert r_hat_eval(gauss, 0.0, np.zeros(3)) == pytest.approx(one**4, rel=1e-10)


@pytest.mark.parametrize("kind", ["gaussian_separable", "tapered_gaussian"])
def test_bochner_positivity(kind):
    m = CovarianceModel(kind, 1.0, 1.0, 1.0, 3, 3.0 if kind != "gaussian_separable" else None)
    xi0, r = np.meshgrid(np.linspace(-20, 20, 41), np.linspace(0, 20, 21))
    assert np.all(m.spectrum_radial(xi0, r) >= 0.0)


def test_fourier_round_trip_tapered(tapered):
    # the tabulated spectrum inverts to R(0, 0) = A; table resolution limits this to ~1e-5
    res = integrate_spectral(lambda xi0, r: tapered.spectrum_radial(xi0, r) / (2 * math.pi) ** 4, 3,
                             isotropic=True)
    assert res.value == pytest.approx(1.0, abs=1e-5)


def test_fourier_round_trip_at_lag(tapered):
    t, r = 0.5, 0.8
    def g(xi0, rho):
        return (tapered.spectrum_radial(xi0, rho) * np.cos(xi0 * t) * radial_fourier_kernel(rho * r, 3)
                / (2 * math.pi) ** 4)
    res = integrate_spectral(g, 3, isotropic=True)
    assert res.value == pytest.approx(float(tapered.radial(t, r)), abs=1e-5)


def test_time_integral(gauss, tapered):
    assert r_time_integral(gauss, np.zeros(3)) == pytest.approx(2.5066282746, rel=1e-10)
    assert r_time_integral(tapered, np.array([3.0, 0, 0])) == 0.0
    xs = np.random.default_rng(0).normal(size=(20, 3))
    for m in (gauss, tapered):
        r0 = r_time_integral(m, np.zeros(3))
        assert all(r_time_integral(m, x) <= r0 + 1e-14 for x in xs)


def test_envelope(gauss, tapered):
    assert sup_envelope(gauss, np.zeros(3)) == 1.0
    rng = np.random.default_rng(1)
    for m in (gauss, tapered):
        x = np.array([0.7, 0.2, -0.4])
        g = sup_envelope(m, x)
        ts = rng.uniform(-4, 4, 100)
        assert np.all(np.abs(m(ts, np.broadcast_to(x, (100, 3)))) <= g + 1e-12)


def test_heat_average_closed_form_matches_quadrature():
    # a taper radius far outside the Gaussian's reach leaves R essentially unchanged
    sep = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 3)
    wide = CovarianceModel("tapered_gaussian", 1.0, 1.0, 1.0, 3, 40.0)
    for t in (0.1, 1.0, 3.0):
        assert wide.heat_average(t, 0.0) == pytest.approx(sep.heat_average(t, 0.0), rel=3e-2)


def test_amplitude_linearity(gauss):
    m2 = gauss.scaled(2.0)
    assert m2.spectrum_radial(0.3, 0.4) == pytest.approx(2 * gauss.spectrum_radial(0.3, 0.4), rel=1e-14)


def test_validation():
    with pytest.raises(DomainError):
        CovarianceModel(amplitude=0.0)
    with pytest.raises(DomainError):
        CovarianceModel("tapered_gaussian")
    with pytest.raises(DomainError):
        CovarianceModel(taper_radius=2.0)
    with pytest.raises(DomainError):
        CovarianceModel(d=7)


def test_serialization_round_trip(tapered):
    again = CovarianceModel.from_dict(tapered.to_dict())
    assert again == tapered
