import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scenery_homog.errors import DomainError
from scenery_homog.field import ConstantFactory, HybridFactory, constant_field, synth_harmonic
from scenery_homog.fk import (InitialData, SolveSpec, convergence_table, decreasing_within, default_fk_dt,
                              fk_values, heat_semigroup, solve_u0, solve_u_eps, table_header, time_lattice)
from scenery_homog.numerics import RngStream

COS = InitialData("cosine_wave", (1.0, 0.0, 0.0))


def test_heat_semigroup_closed_forms():
    assert heat_semigroup(COS, 1.0, np.zeros(3)) == pytest.approx(math.exp(-0.5))
    bump = InitialData("gaussian_bump", center=(0, 0, 0), width=1.0)
    assert heat_semigroup(bump, 1.0, np.zeros(3)) == pytest.approx(0.5**1.5)
    assert heat_semigroup(InitialData("constant", c=2.5), 3.0, np.zeros(3)) == 2.5


def test_heat_semigroup_monte_carlo_oracle():
    bump = InitialData("gaussian_bump", center=(0.5, 0, 0), width=0.7)
    z = np.random.default_rng(0).normal(size=(200000, 3))
    mc = bump(z * math.sqrt(0.8))
    assert abs(mc.mean() - heat_semigroup(bump, 0.8, np.zeros(3))) < 4 * mc.std() / math.sqrt(z.shape[0])


def test_solve_u0(gauss):
    # e^{-2} cos(0) e^{-1/2} for α = 1
    assert solve_u0(gauss, COS, 1.0, np.zeros(3), 1.0) == pytest.approx(math.exp(-2.5), rel=1e-9)
    assert solve_u0(gauss, COS, 1.0, np.zeros(3), "G2") == pytest.approx(
        math.exp(-math.sqrt(math.pi / 2) - 0.5), rel=1e-9)
    assert solve_u0(gauss, COS, 0.0, np.zeros(3), 2.0) == 1.0


def test_zero_potential_matches_heat(gauss):
    spec = SolveSpec(0.5, 2.0, 1.0, (0.0, 0.0, 0.0), 4000, RngStream(0))
    est = solve_u_eps(constant_field(0.0, 3), COS, spec, gauss)
    assert abs(est.mean.real - math.exp(-0.5)) <= 4 * est.stderr.real
    assert est.mean.imag == 0.0


@given(st.floats(-1, 1), st.floats(0.2, 0.9))
def test_constant_potential_phase_is_exact(c, eps):
    f = InitialData("constant", c=1.0)
    spec = SolveSpec(eps, 3.0, 1.0, (0.0, 0.0, 0.0), 3, RngStream(0), dt=0.25)
    vals, _ = fk_values(constant_field(c, 3), f, spec)
    expected = np.exp(1j * eps ** (-spec.delta) * c)
    assert np.allclose(vals, expected, rtol=1e-12)


def test_modulus_bounded_by_sup_f(gauss):
    fld = synth_harmonic(gauss, 8, RngStream(1))
    spec = SolveSpec(0.5, 1.0, 1.0, (0.0, 0.0, 0.0), 300, RngStream(2))
    vals, _ = fk_values(fld, COS, spec, gauss)
    assert np.all(np.abs(vals) <= 1.0 + 1e-12)


def test_refine_shares_paths(gauss):
    spec = SolveSpec(0.5, 2.0, 1.0, (0.0, 0.0, 0.0), 50, RngStream(3), dt=0.125)
    (coarse, fine), dt = fk_values(constant_field(0.0, 3), COS, spec, gauss, refine=True)
    assert dt == 0.125
    assert np.allclose(coarse, fine, atol=1e-12)   # V = 0: both levels see f(x + B_t)


def test_dimension_mismatch(gauss):
    spec = SolveSpec(0.5, 2.0, 1.0, (0.0, 0.0), 5, RngStream(0))
    with pytest.raises(DomainError):
        fk_values(constant_field(0.0, 3), COS, spec, gauss)


def test_dt_must_divide_t(gauss):
    spec = SolveSpec(0.5, 2.0, 1.0, (0.0, 0.0, 0.0), 5, RngStream(0), dt=0.3)
    with pytest.raises(DomainError):
        fk_values(constant_field(0.0, 3), COS, spec, gauss)


def test_coarse_dt_warning(gauss):
    spec = SolveSpec(0.1, 3.0, 1.0, (0.0, 0.0, 0.0), 5, RngStream(0), dt=0.5)
    assert "warning" in solve_u_eps(constant_field(0.0, 3), COS, spec, gauss).meta


def test_default_dt_and_lattice(gauss):
    spec = SolveSpec(0.5, 2.0, 1.0, (0.0, 0.0, 0.0), 5, RngStream(0))
    dt = default_fk_dt(spec, gauss)
    assert dt <= 0.25 / 8 + 1e-15
    assert abs(round(1 / dt) * dt - 1.0) < 1e-12
    tau0, dtau, n = time_lattice(spec, dt)
    assert n == round(1 / dt) and tau0 == pytest.approx(0.5 * dtau)
    assert time_lattice(spec, dt, refine=True)[2] == 4 * n


def test_table_header():
    h = table_header(3, ("N1", "N2"))
    assert h[:6] == ["epsilon", "alpha", "t", "x1", "x2", "x3"]
    assert h[6:9] == ["N1", "N2", "re_mean"]


def test_convergence_table_zero_field(gauss):
    rows = convergence_table(ConstantFactory(0.0), gauss, COS, 2.0, [0.5, 0.35], n_paths=500, n_fields=2,
                             u0=math.exp(-0.5))
    assert len(rows) == 2
    for r in rows:
        assert abs(r["re_mean"] - math.exp(-0.5)) <= 4 * r["re_stderr"] + 1e-3


def test_convergence_table_deterministic(gauss):
    args = (HybridFactory(4), gauss, COS, 2.0, [0.5, 0.35])
    a = convergence_table(*args, n_paths=300, n_fields=2, master_seed=5)
    b = convergence_table(*args, n_paths=300, n_fields=2, master_seed=5, workers=2)
    assert a == b


def test_convergence_table_rejects_bad_schedule(gauss):
    with pytest.raises(DomainError):
        convergence_table(ConstantFactory(0.0), gauss, COS, 2.0, [0.25, 0.5])


def test_decreasing_within():
    assert decreasing_within([3, 2, 1], [0, 0, 0])
    assert not decreasing_within([1, 2], [0.1, 0.1])
    assert decreasing_within([1.0, 1.1], [0.1, 0.1])
