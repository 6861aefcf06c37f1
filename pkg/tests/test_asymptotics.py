import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracscalar.asymptotics import (amplitude_exponent, concentration_lambda, fit_power_law,
                                    profile_distance_lq, profile_distance_max, radial_interp,
                                    require_fits, rescale_critical, rescale_subcritical,
                                    rescaled_minimizer, rescaled_nonlinearity,
                                    rescaled_q_coefficient, sweep)
from fracscalar.bubble import compute_S_star, q_star, sample_bubble, w_family_field
from fracscalar.errors import (DegenerateFit, FitSkipped, InvalidParams, NotSolvable,
                               WrongRegime)
from fracscalar.minimizer import Gaussian, MinimizeOptions
from fracscalar.problem import ProblemParams, Regime
from fracscalar.spectral import Field, Grid, hs_seminorm_sq, lt_norm_pow

CRIT = ProblemParams(3, 0.5, 3.0, 5.0, 0.01)
SUB = ProblemParams(3, 0.5, 2.5, 4.0, 0.01)


def test_power_law_exact():
    x = np.geomspace(1e-3, 1e-1, 6)
    slope, intercept, r2 = fit_power_law(list(zip(x, 3.0 * x ** -0.7)))
    assert slope == pytest.approx(-0.7, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12)


@given(k=st.floats(-3, 3), c=st.floats(0.1, 10))
def test_power_law_recovers_exponent(k, c):
    x = np.geomspace(0.002, 0.2, 5)
    assert fit_power_law(list(zip(x, c * x ** k)))[0] == pytest.approx(k, abs=1e-9)


def test_power_law_rejects_degenerate_data():
    with pytest.raises(DegenerateFit):
        fit_power_law([(1, 1), (2, 2), (3, 3)])
    with pytest.raises(DegenerateFit):
        fit_power_law([(0.1, 1), (0.05, -1), (0.02, 1), (0.01, 2)])
    with pytest.raises(DegenerateFit):
        fit_power_law([(1.0, 1), (1.1, 2), (1.2, 3), (1.3, 4)])


def test_critical_rescaling_maps_bubbles_to_unit_bubble():
    g = Grid(3, 64, 20.0)
    lam = 2.5
    u = sample_bubble(g, lam, 0.5)
    v = rescale_critical(u, lam, CRIT)
    ref = sample_bubble(v.grid, 1.0, 0.5)
    assert np.max(np.abs(v.values - ref.values)) <= 1e-12
    # seminorm and critical norm are dilation invariant
    assert hs_seminorm_sq(v, 0.5) == pytest.approx(hs_seminorm_sq(u, 0.5), rel=1e-12)
    assert lt_norm_pow(v, 3.0) == pytest.approx(lt_norm_pow(u, 3.0), rel=1e-12)
    with pytest.raises(InvalidParams):
        rescale_critical(u, 0.0, CRIT)


@pytest.fixture(scope="module")
def w_setup():
    g = Grid(3, 128, 30.0)
    sstar = compute_S_star(g, 0.5, strict=False).value
    return g, sstar, q_star(g, 0.5, sstar)


@pytest.mark.parametrize("lam", [1.0, 2.0])
def test_concentration_lambda_on_w_family(w_setup, lam):
    g, sstar, qs = w_setup
    exact = rescale_critical(w_family_field(g, 0.5, sstar), 1.0 / lam, CRIT)
    assert concentration_lambda(exact, CRIT, qs) == pytest.approx(lam, rel=1e-6)
    # fresh samples move the shells, so only discretization accuracy is expected
    sampled = w_family_field(g, 0.5, sstar, lam)
    assert concentration_lambda(sampled, CRIT, qs) == pytest.approx(lam, rel=5e-3)


def test_concentration_lambda_unreachable_target(w_setup):
    g, _, _ = w_setup
    tiny = Field(g, 1e-3 * np.exp(-g.radius ** 2))
    with pytest.raises(NotSolvable):
        concentration_lambda(tiny, CRIT, 1.0)


def test_subcritical_scalings():
    assert amplitude_exponent(SUB) == pytest.approx(2.0)
    assert rescaled_q_coefficient(SUB) == pytest.approx(0.01 ** 3.0)
    nl = rescaled_nonlinearity(SUB)
    assert nl.mass == 1.0 and nl.q_coef == pytest.approx(1e-6)
    g = Grid(3, 32, 10.0)
    u = Field(g, 1e-4 * np.exp(-g.radius ** 2))
    v = rescale_subcritical(u, SUB)
    assert v.center == pytest.approx(u.center * 0.01 ** -2.0)
    assert v.grid.L == pytest.approx(10.0 * 0.01)
    with pytest.raises(WrongRegime):
        rescale_subcritical(u, CRIT)
    with pytest.raises(InvalidParams):
        rescale_subcritical(u, SUB.with_eps(0.0))


def test_rescaled_minimizer_meets_rescaled_constraint():
    g = Grid(3, 32, 10.0)
    w = Field(g, 0.05 * np.exp(-g.radius ** 2 / 4))
    wp = rescaled_minimizer(w, SUB)
    nl = rescaled_nonlinearity(SUB)
    B = SUB.two_star * float(np.sum(nl.F(wp.values))) * wp.grid.cell_volume
    assert B == pytest.approx(1.0, rel=1e-12)
    assert wp.center == pytest.approx(w.center * 0.01 ** -2.0)


def test_profile_distances():
    g = Grid(2, 64, 8.0)
    a = Field(g, np.exp(-g.radius ** 2))
    assert profile_distance_max(a, a) == pytest.approx(0.0, abs=1e-12)
    assert profile_distance_lq(a, a, 4.0) == pytest.approx(0.0, abs=1e-12)
    b = Field(g, 0.9 * a.values)
    assert profile_distance_max(a, b) == pytest.approx(0.1, rel=1e-6)
    fine = Grid(2, 128, 8.0)
    on_fine = radial_interp(a, fine)
    assert on_fine.center == pytest.approx(1.0)


def test_sweep_validation():
    g = Grid(1, 256, 20.0)
    p = ProblemParams(1, 0.45, 3.0, 6.0, 0.01)
    with pytest.raises(InvalidParams):
        sweep(p, [0.02, 0.01, 0.005], g)
    with pytest.raises(InvalidParams):
        sweep(p, [0.01, 0.02, 0.005, 0.001], g)
    with pytest.raises(InvalidParams):
        sweep(p, [p.eps_star, 0.02, 0.005, 0.001], g)


@pytest.fixture(scope="module")
def small_sweep():
    p = ProblemParams(1, 0.45, 3.0, 6.0, 0.01)
    g = Grid(1, 2048, 60.0)
    return sweep(p, list(np.geomspace(0.04, 0.004, 4)), g, init=Gaussian(1.0))


def test_small_subcritical_sweep(small_sweep):
    st_ = small_sweep
    assert st_.regime is Regime.SUBCRITICAL
    assert len(st_.successful) == 4
    require_fits(st_)
    slope = st_.fits["u_center"][0]
    assert slope == pytest.approx(1.0, rel=0.1)
    s_vals = st_.column("s_eps")
    assert np.all(np.diff(s_vals) < 0)
    ratio = st_.column("center_ratio")
    assert np.all(np.isfinite(ratio))


def test_require_fits_with_failures(small_sweep):
    import copy
    st_ = copy.copy(small_sweep)
    st_.records = [copy.copy(r) for r in small_sweep.records]
    st_.records[0].error = "synthetic"
    with pytest.raises(FitSkipped):
        require_fits(st_)


def test_radial_interp_across_boxes():
    a = Grid(3, 64, 10.0)
    b = Grid(3, 64, 10.0 * (1 + 1e-3))
    fa = Field(a, np.exp(-(a.radius / 0.8) ** 2))
    fb = Field(b, np.exp(-(b.radius / 0.8) ** 2))
    # same function sampled on two boxes: only interpolation separates them
    assert profile_distance_max(fa, fb) <= 1e-5
    exact = np.exp(-(b.radius / 0.8) ** 2)
    inside = b.radius <= 8.0
    err = np.max(np.abs(radial_interp(fa, b).values - exact)[inside])
    assert err <= 1e-5


def test_warm_and_cold_sweeps_agree(small_sweep):
    p = ProblemParams(1, 0.45, 3.0, 6.0, 0.01)
    g = Grid(1, 2048, 60.0)
    cold = sweep(p, list(np.geomspace(0.04, 0.004, 4)), g, init=Gaussian(1.0),
                 warm_start=False)
    warm_s, cold_s = small_sweep.column("s_eps"), cold.column("s_eps")
    assert np.allclose(warm_s, cold_s, rtol=1e-6, atol=0)
    for a, b in zip(small_sweep.records, cold.records):
        assert profile_distance_max(a.ground, b.ground) <= 1e-3 * b.u_center


def test_subcritical_profiles_approach_limit(small_sweep):
    d = small_sweep.column("dist_to_limit")
    assert np.all(np.diff(d) < 0)
