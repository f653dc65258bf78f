import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenery_homog.covariance import CovarianceModel
from scenery_homog.errors import DomainError, SynthesisError, UnsupportedBackendError
from scenery_homog.field import (ConstantFactory, GridSpec, HarmonicFactory, HybridFactory, constant_field,
                                 cov_rows, discrete_spectrum, empirical_cov, grid_site_samples, load_grid,
                                 make_factory, save_grid, synth_grid, synth_grid_pair, synth_harmonic,
                                 synth_hybrid, wick_four_point)
from scenery_homog.numerics import RngStream


def test_harmonic_bound_and_zero_mean(gauss):
    fld = synth_harmonic(gauss, 64, RngStream(3))
    pts = np.random.default_rng(0).normal(scale=4, size=(500, 3))
    vals = fld(np.linspace(0, 10, 500), pts)
    assert np.all(np.abs(vals) <= fld.bound + 1e-12)
    assert fld.bound == pytest.approx(64 * math.sqrt(2 / 64))


def test_harmonic_scalar_and_broadcast_agree(gauss):
    fld = synth_harmonic(gauss, 16, RngStream(0))
    x = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]])
    assert np.allclose(fld(0.7, x), fld(np.full(2, 0.7), x), rtol=1e-13)
    assert isinstance(fld(0.7, x[0]), float)


def test_constant_field():
    fld = constant_field(0.3, 3)
    assert np.allclose(fld(np.arange(4.0), np.zeros((4, 3))), 0.3)


def test_harmonic_ensemble_covariance(gauss):
    lags = [(0.5, np.zeros(3)), (0.0, np.array([1.0, 0, 0]))]
    rows = empirical_cov(lambda s: synth_harmonic(gauss, 8, s), lags, 3000, RngStream(11))
    for t, x, est, se in rows:
        assert abs(est - float(gauss(t, x))) <= 4 * se


def test_tapered_harmonic_covariance(tapered):
    lags = [(0.0, np.array([0.5, 0, 0])), (0.0, np.array([3.5, 0, 0]))]
    rows = empirical_cov(lambda s: synth_harmonic(tapered, 8, s), lags, 3000, RngStream(5))
    for t, x, est, se in rows:
        assert abs(est - float(tapered(t, x))) <= 4 * se


def test_empirical_cov_needs_enough_realizations(gauss):
    with pytest.raises(DomainError):
        empirical_cov(lambda s: synth_harmonic(gauss, 4, s), [(0.0, np.zeros(3))], 10, RngStream(0))


def test_cov_rows_oracle():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(400, 2))
    (_, _, est, _), = cov_rows(v, [(0.0, np.zeros(1))])
    assert est == pytest.approx(np.cov(v.T)[0, 1], rel=1e-12)


def test_discrete_spectrum_nonnegative():
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 1)
    grid = GridSpec(64, 64, 0.25, 0.25, 1)
    lam = discrete_spectrum(m, grid)
    assert lam.min() > -1e-9 * lam.max()


def test_short_periods_rejected():
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 1)
    with pytest.raises(SynthesisError):
        synth_grid(m, GridSpec(16, 16, 0.25, 0.25, 1), RngStream(0))


def test_grid_covariance_small_lattice():
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 1)
    grid = GridSpec(32, 32, 0.25, 0.25, 1)
    t = np.array([0.0, 0.5, 0.0])
    x = np.array([[0.0], [0.0], [0.5]])
    vals = grid_site_samples(m, grid, t, x, 2000, RngStream(2), single=False)
    for j in (1, 2):
        (_, _, est, se), = cov_rows(vals[:, [0, j]], [(t[j], x[j])])
        assert abs(est - float(m(t[j], x[j]))) <= 4 * se


def test_grid_pair_parts_are_uncorrelated():
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 1)
    grid = GridSpec(32, 32, 0.25, 0.25, 1)
    a, b = [], []
    for i in range(400):
        f, g = synth_grid_pair(m, grid, RngStream(9, i))
        a.append(f(0.0, np.zeros(1)))
        b.append(g(0.0, np.zeros(1)))
    a, b = np.ravel(a), np.ravel(b)
    assert abs(np.mean(a * b)) <= 4 * np.std(a * b) / math.sqrt(a.size)


def test_grid_interpolation_hits_nodes():
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 1)
    grid = GridSpec(32, 32, 0.25, 0.25, 1)
    fld = synth_grid(m, grid, RngStream(0))
    assert fld(0.5, np.array([0.75])) == pytest.approx(fld.values[2, 3], abs=1e-15)
    # periodic wrap
    assert fld(0.5 + 8.0, np.array([0.75 - 8.0])) == pytest.approx(fld.values[2, 3], abs=1e-12)


def test_grid_save_load_round_trip(tmp_path):
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 2)
    fld = synth_grid(m, GridSpec(8, 8, 0.5, 0.5, 2), RngStream(4))
    p = tmp_path / "f.bin"
    save_grid(fld, p)
    again = load_grid(p)
    assert np.array_equal(again.values, fld.values)
    assert again.grid == fld.grid and again.model == m


def test_load_grid_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nonsense" * 4)
    with pytest.raises(DomainError):
        load_grid(p)


def test_wick_identity_on_gaussian_samples():
    rng = np.random.default_rng(0)
    cov = np.array([[1, .5, .2, .1], [.5, 1, .3, .2], [.2, .3, 1, .4], [.1, .2, .4, 1]])
    s = rng.multivariate_normal(np.zeros(4), cov, size=20000)
    est, se, wick = wick_four_point(s, cov)
    assert abs(est - wick) <= 4 * se


def test_hybrid_covariance(gauss):
    lags = [(1.0, np.zeros(3)), (0.0, np.array([0.0, 1.0, 0.0])), (0.5, np.array([0.5, 0, 0]))]
    rows = empirical_cov(lambda s: synth_hybrid(gauss, 16, 0.0, 0.25, 12, s), lags, 2000, RngStream(7))
    for t, x, est, se in rows:
        assert abs(est - float(gauss(t, x))) <= 4 * se


def test_hybrid_interpolates_linearly(gauss):
    fld = synth_hybrid(gauss, 4, 0.0, 0.5, 5, RngStream(1))
    x = np.array([0.3, 0.1, -0.2])
    mid = fld(0.25, x)
    assert mid == pytest.approx(0.5 * (fld.at_node(0, x) + fld.at_node(1, x)), rel=1e-12)
    with pytest.raises(DomainError):
        fld(10.0, x)


def test_hybrid_rejects_tapered(tapered):
    with pytest.raises(UnsupportedBackendError):
        synth_hybrid(tapered, 4, 0.0, 0.5, 5, RngStream(1))


@given(st.integers(0, 1000))
def test_factories_are_deterministic(seed):
    m = CovarianceModel("gaussian_separable", 1.0, 1.0, 1.0, 3)
    x = np.array([[0.2, 0.1, 0.0]])
    for fac in (HarmonicFactory(8), HybridFactory(4)):
        a = fac(m, (0.0, 0.5, 4), RngStream(seed))(np.array([0.5]), x)
        b = fac(m, (0.0, 0.5, 4), RngStream(seed))(np.array([0.5]), x)
        assert np.array_equal(a, b)


def test_make_factory():
    assert make_factory("harmonic", 3) == HarmonicFactory(3)
    assert make_factory("zero") == ConstantFactory(0.0)
    with pytest.raises(UnsupportedBackendError):
        make_factory("grid")
