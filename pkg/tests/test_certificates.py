import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracscalar import spectral
from fracscalar.bubble import sample_bubble
from fracscalar.certificates import (CertificateReport, certify, critical_identities,
                                     default_decay_window, energy_level_residual, fit_decay,
                                     nehari_residual, pohozaev_residual, radial_lt_bound_ratio,
                                     subcritical_limit_residuals, supercritical_limit_residuals,
                                     symmetry_monotonicity)
from fracscalar.errors import InsufficientTail, WrongRegime
from fracscalar.minimizer import Gaussian, ground_state, minimize
from fracscalar.problem import ProblemParams
from fracscalar.spectral import Field, Grid, RadialProfile, radialize

PARAMS_1D = ProblemParams(1, 0.45, 3.0, 6.0, 0.01)
GRID_1D = Grid(1, 4096, 60.0)


@pytest.fixture(scope="module")
def solved():
    res = minimize(PARAMS_1D, GRID_1D)
    return res, ground_state(res, PARAMS_1D)


def test_zero_field_residuals():
    z = Field(Grid(1, 64, 5.0), np.zeros(64))
    assert pohozaev_residual(z, PARAMS_1D) == 0.0
    assert nehari_residual(z, PARAMS_1D) == 0.0


def test_converged_minimizer_identities(solved):
    res, u = solved
    poho = pohozaev_residual(res.w, PARAMS_1D, theta=res.s_eps)
    neh = nehari_residual(res.w, PARAMS_1D, theta=res.s_eps)
    assert poho <= 1e-3
    assert neh <= 1e-3
    # Pohožaev and Nehari for the ground state itself use θ = 1
    assert pohozaev_residual(u, PARAMS_1D) <= 1e-3
    assert nehari_residual(u, PARAMS_1D) <= 1e-3
    assert pohozaev_residual(res.w, PARAMS_1D, theta=2 * res.s_eps) > 0.5
    assert energy_level_residual(u, res.s_eps, PARAMS_1D) <= 0.01


def test_decay_examples():
    r = np.linspace(0.0, 40.0, 4001)
    prof = RadialProfile(r, (1 + r ** 2) ** -1.0, 0.0, np.ones_like(r))
    assert fit_decay(prof, (5, 15)).exponent == pytest.approx(2.0, rel=0.02)
    rr = np.linspace(1.0, 40.0, 500)
    pure = RadialProfile(rr, rr ** -4.0, 0.0, np.ones_like(rr))
    fit = fit_decay(pure, (5, 15))
    assert fit.exponent == pytest.approx(4.0, abs=1e-6)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InsufficientTail):
        fit_decay(pure, (5.0, 5.2))
    with pytest.raises(ValueError):
        fit_decay(pure, (5, 30), box_half_length=40.0)


def test_ground_state_decay_1d(solved):
    _, u = solved
    fit = fit_decay(radialize(u), default_decay_window(u.grid.L), u.grid.L)
    assert fit.exponent == pytest.approx(1.0 + 2 * 0.45, rel=0.15)


def test_symmetry_detectors():
    g = Grid(3, 32, 8.0)
    u1 = sample_bubble(g, 1.0, 0.5)
    asym, viol = symmetry_monotonicity(u1)
    assert asym <= 1e-12 and viol <= 1e-12
    shifted = Field(g, np.roll(u1.values, 3, axis=0))
    asym_s, _ = symmetry_monotonicity(shifted)
    assert asym_s > 0.1


def test_ground_state_symmetric(solved):
    _, u = solved
    asym, viol = symmetry_monotonicity(u)
    assert asym <= 1e-3 and viol <= 1e-3


def test_regime_identity_sets(solved):
    res, u = solved
    rep = certify(u, res.w, res.s_eps, PARAMS_1D)
    assert rep.regime_identities == {}
    with pytest.raises(WrongRegime):
        critical_identities(res.w, PARAMS_1D)
    with pytest.raises(WrongRegime):
        supercritical_limit_residuals(res.w, PARAMS_1D)
    with pytest.raises(WrongRegime):
        subcritical_limit_residuals(res.w, ProblemParams(3, 0.5, 3.0, 5.0, 0.01))
    crit = critical_identities(sample_bubble(Grid(3, 16, 8.0), 1.0, 0.5),
                               ProblemParams(3, 0.5, 3.0, 5.0, 0.01))
    assert crit["k"] == 1.25


def test_report_roundtrip(solved):
    res, u = solved
    rep = certify(u, res.w, res.s_eps, PARAMS_1D)
    parsed = CertificateReport.parse(rep.to_text())
    assert parsed["nehari_res"] == rep.nehari_res
    assert parsed["decay_exponent"] == rep.decay.exponent
    assert all(math.isfinite(v) and v >= 0 for k, v in parsed.items() if k.endswith("_res"))


def test_apriori_bounds(solved, rng):
    _, u = solved
    assert u.values.max() <= 1 + 1e-3
    radii = rng.uniform(0.01, 0.45, 10) * u.grid.L
    assert radial_lt_bound_ratio(u, 2.0, radii) <= 1.0
    assert radial_lt_bound_ratio(u, 4.0, radii) <= 1.0


def test_residuals_independent_of_worker_count(solved):
    res, u = solved
    base = certify(u, res.w, res.s_eps, PARAMS_1D)
    old = spectral.FFT_WORKERS
    spectral.FFT_WORKERS = 2
    try:
        other = certify(u, res.w, res.s_eps, PARAMS_1D)
    finally:
        spectral.FFT_WORKERS = old
    for key in ("pohozaev_res", "nehari_res", "multiplier_res", "energy_level_res"):
        assert getattr(other, key) == pytest.approx(getattr(base, key), abs=1e-12)


@given(amp=st.floats(0.2, 0.9), width=st.floats(0.5, 3.0))
def test_pohozaev_vanishes_at_matching_theta(amp, width):
    g = Grid(1, 256, 20.0)
    w = Field(g, amp * np.exp(-(g.radius / width) ** 2))
    A = spectral.hs_seminorm_sq(w, 0.45)
    r1 = pohozaev_residual(w, PARAMS_1D, theta=1.0)
    R = PARAMS_1D.two_star * float(np.sum(
        PARAMS_1D.nonlinearity().F(w.values))) * g.cell_volume
    if R <= 0:
        return
    theta = A / R
    assert pohozaev_residual(w, PARAMS_1D, theta=theta) <= 1e-10
    assert r1 == pytest.approx(abs(1 - 1 / theta), rel=1e-9)
