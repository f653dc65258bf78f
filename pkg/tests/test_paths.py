import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenery_homog.errors import BudgetError, DomainError
from scenery_homog.field import constant_field, synth_harmonic
from scenery_homog.numerics import RngStream
from scenery_homog.paths import (PATH_BLOCK, PathEnsemble, PathSpec, SceneryRegime, block_split,
                                 ergodic_average, double_integral_functional, midpoints, sample_paths,
                                 scenery_integral)


def test_brownian_moments():
    ens = sample_paths(PathSpec(2, 1.0, 0.01, 4000, RngStream(0)))
    end = ens.values[:, -1]
    assert abs(end.mean()) < 4 * math.sqrt(1 / 8000)
    assert end.var() == pytest.approx(1.0, abs=0.06)
    assert np.array_equal(ens.values[:, 0], np.zeros((4000, 2)))


@given(st.integers(1, 600), st.integers(0, 50))
def test_path_count_and_shape(n, seed):
    ens = sample_paths(PathSpec(1, 0.05, 0.01, n, RngStream(seed)))
    assert ens.values.shape == (n, 6, 1)


def test_prefix_independent_of_ensemble_size():
    a = sample_paths(PathSpec(3, 1.0, 0.1, 10, RngStream(1))).values
    b = sample_paths(PathSpec(3, 1.0, 0.1, PATH_BLOCK + 10, RngStream(1))).values
    assert np.array_equal(a, b[:10])


def test_chunks_stitch_across_boundaries():
    ens = sample_paths(PathSpec(1, 3000 * 0.001, 0.001, 3, RngStream(2)))
    full = ens.block(0)
    assert full.shape == (3, 3001, 1)
    part = ens.block(0, 1500)
    assert np.array_equal(part, full[:, :1501])


def test_coarsen_observes_same_paths():
    ens = sample_paths(PathSpec(2, 1.0, 0.01, 5, RngStream(3)))
    c = ens.coarsen(4)
    assert c.dt == pytest.approx(0.04)
    assert np.allclose(c.values, ens.values[:, ::4], atol=1e-13)
    with pytest.raises(DomainError):
        ens.coarsen(3)


def test_budget_errors():
    with pytest.raises(BudgetError):
        PathSpec(1, 1e9, 1.0, 1, RngStream(0))
    with pytest.raises(DomainError):
        PathSpec(1, 1.0, 0.0, 1, RngStream(0))


def test_midpoints():
    p = np.arange(6.0).reshape(1, 3, 2)
    assert np.array_equal(midpoints(p), [[[1.0, 2.0], [3.0, 4.0]]])


def test_regime_scales():
    g = SceneryRegime.from_macroscopic(3.0, 0.04)
    assert g.tag == "G2" and g.epsilon == pytest.approx(0.04 ** 1.5)
    assert g.space_scale == pytest.approx(g.epsilon ** (1 / 3))
    le = SceneryRegime("LE2", 1.0, 0.1)
    assert le.time_scale == pytest.approx(0.1) and le.space_scale == 1.0
    with pytest.raises(DomainError):
        SceneryRegime("G2", 2.0, 0.1)


def test_scenery_integral_constant_field():
    reg = SceneryRegime("LE2", 1.0, 0.2)
    ens = sample_paths(PathSpec(3, reg.horizon(1.0), 0.05, 10, RngStream(0)))
    res = scenery_integral(constant_field(0.5, 3), ens, reg, 1.0)
    # ε ∫_0^{1/ε²} 0.5 ds = 0.5 / ε
    assert np.allclose(res.values, 0.5 / 0.2, rtol=1e-12)


def test_block_split_sums_to_total(gauss):
    reg = SceneryRegime("G2", 3.0, 0.4)
    fld = synth_harmonic(gauss, 8, RngStream(1))
    ens = sample_paths(PathSpec(3, reg.horizon(1.0), 0.125, 40, RngStream(2)))
    total = scenery_integral(fld, ens, reg, 1.0).values
    bs = block_split(fld, ens, reg, 0.4, 0.2, 1.0)
    assert np.allclose(bs.total, total, atol=1e-12)
    assert bs.meta["gamma1_exceeds_half"] is False
    with pytest.raises(DomainError):
        block_split(fld, ens, reg, 0.2, 0.4, 1.0)


def test_ergodic_average_constant():
    ens = sample_paths(PathSpec(3, 100.0, 0.5, 4, RngStream(0)))
    out = ergodic_average(constant_field(1.5, 3), ens, 0.1, 1.0, [10.0, 100.0])
    assert np.allclose(out, 1.5)
    with pytest.raises(DomainError):
        ergodic_average(constant_field(1.5, 3), ens, 0.1, 3.0, 10.0)


def test_double_integral_brute_force_oracle(gauss):
    eps, gamma, beta = 0.5, 1.0, 0.5
    ens = sample_paths(PathSpec(3, eps ** -gamma, 0.05, 6, RngStream(0)))
    vals = double_integral_functional(ens, gauss, eps, beta, gamma)
    m = midpoints(ens.values)
    n = m.shape[1]
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) * 0.05
    for p in range(6):
        r = eps**beta * np.linalg.norm(m[p][:, None] - m[p][None], axis=-1)
        brute = eps**gamma * 0.05**2 * np.exp(-0.5 * lag**2 - 0.5 * r**2).sum()
        assert vals[p] == pytest.approx(brute, rel=1e-12)
    with pytest.raises(DomainError):
        double_integral_functional(ens, gauss, eps, 1.5, gamma)
