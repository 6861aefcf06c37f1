import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracscalar.errors import DomainError, InvalidParams
from fracscalar.problem import (Nonlinearity, ProblemParams, Regime, classify_regime,
                                critical_exponent, eps_star, limit_constants, nonlinearity)


def scan_eps_star(p, q, n=10**6):
    """Independent oracle: dense scan of sup F_eps on (0, 2], bisected in eps."""
    z = np.linspace(2.0 / n, 2.0, n)
    zp, zq, z2 = z ** p / p, z ** q / q, z * z / 2

    def sup_F(eps):
        return np.max(zp - zq - eps * z2)

    lo, hi = 0.0, 1.0
    while sup_F(hi) > 0:
        hi *= 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if sup_F(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("p,q,regime", [(2.5, 4, Regime.SUBCRITICAL), (3, 5, Regime.CRITICAL),
                                        (4, 6, Regime.SUPERCRITICAL)])
def test_classify_regime(p, q, regime):
    assert classify_regime(ProblemParams(3, 0.5, p, q, 0.01)) is regime


def test_critical_detection_uses_same_arithmetic():
    s = 0.45
    p = critical_exponent(1, s)
    assert ProblemParams(1, s, p, 25.0).regime is Regime.CRITICAL
    assert ProblemParams(1, s, p + 1e-9, 25.0).regime is Regime.SUPERCRITICAL


@pytest.mark.parametrize("kw", [dict(N=1, s=0.5), dict(N=3, s=1.0), dict(p=2.0), dict(p=4, q=3),
                                dict(eps=-1.0), dict(N=4)])
def test_invalid_params(kw):
    base = dict(N=3, s=0.5, p=3.0, q=5.0, eps=0.0)
    base.update(kw)
    with pytest.raises(InvalidParams):
        ProblemParams(**base)


def test_derived_quantities():
    par = ProblemParams(3, 0.5, 3.0, 5.0)
    assert par.two_star == 3.0
    assert par.k == pytest.approx(1.25, abs=1e-15)
    sub = ProblemParams(3, 0.5, 2.5, 4.0)
    assert sub.alpha == pytest.approx(2.0 / (0.5 * 0.5) - 1.0)
    assert sub.alpha > 0


def test_nonlinearity_examples():
    par = ProblemParams(3, 0.5, 4.0, 6.0, 0.05)
    assert nonlinearity(0.0, par) == (0.0, 0.0)
    f, F = nonlinearity(1.0, par)
    assert f == pytest.approx(-0.05, abs=1e-15)
    assert F == pytest.approx(1 / 4 - 1 / 6 - 0.025, abs=1e-15)
    f_bar, _ = nonlinearity(2.0, par, truncated=True)
    assert f_bar == pytest.approx(-0.05, abs=1e-15)


def test_negative_input_rejected_untruncated():
    par = ProblemParams(3, 0.5, 2.5, 4.0, 0.05)
    with pytest.raises(DomainError):
        nonlinearity(-0.1, par)


def test_truncated_branches_continuous():
    par = ProblemParams(1, 0.45, 3.0, 6.0, 0.02)
    nl = par.nonlinearity(truncated=True)
    below = nl.F(np.array([1.0 - 1e-9]))[0]
    above = nl.F(np.array([1.0 + 1e-9]))[0]
    assert above == pytest.approx(below, abs=1e-8)
    assert nl.f(np.array([-0.3]))[0] == 0.0
    assert nl.F(np.array([-0.3]))[0] == 0.0


@given(p=st.floats(2.1, 6.0), dq=st.floats(0.2, 4.0), eps=st.floats(0.0, 0.3),
       u=st.floats(0.01, 0.99))
def test_primitive_derivative(p, dq, eps, u):
    nl = Nonlinearity(p, p + dq, mass=eps, q_coef=1.0, cap=None)
    h = 1e-6
    fd = (nl.F(u + h) - nl.F(u - h)) / (2 * h)
    assert fd == pytest.approx(nl.f(u), rel=1e-6, abs=1e-9)


@given(p=st.floats(2.1, 6.0), dq=st.floats(0.2, 4.0), eps=st.floats(0.0, 0.3),
       u=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
def test_truncated_agrees_on_unit_interval(p, dq, eps, u):
    par = ProblemParams(3, 0.5, p, p + dq, eps)
    x = np.array(u)
    f_t, F_t = nonlinearity(x, par, truncated=True)
    f_u, F_u = nonlinearity(x, par, truncated=False)
    np.testing.assert_array_equal(f_t, f_u)
    np.testing.assert_array_equal(F_t, F_u)


@given(p=st.floats(2.1, 6.0), dq=st.floats(0.2, 4.0), eps=st.floats(0.0, 0.3),
       u=st.lists(st.floats(-5.0, 50.0), min_size=1, max_size=20))
def test_truncated_is_bounded(p, dq, eps, u):
    par = ProblemParams(3, 0.5, p, p + dq, eps)
    f_t, _ = nonlinearity(np.array(u), par, truncated=True)
    grid = np.linspace(0, 1, 2001)
    f_unit, _ = nonlinearity(grid, par, truncated=False)
    bound = max(eps, np.max(np.abs(f_unit)))
    assert np.all(np.abs(f_t) <= bound * (1 + 1e-12) + 1e-15)


def test_eps_star_example():
    assert eps_star(4, 6) == pytest.approx(0.1875, abs=1e-14)
    z = np.linspace(1e-6, 2.0, 10**6)
    F = lambda e: np.max(z ** 4 / 4 - z ** 6 / 6 - e * z * z / 2)
    assert F(0.1) > 0
    assert F(0.2) < 0


def test_eps_star_against_scan_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        p = rng.uniform(2.05, 9.5)
        q = rng.uniform(p + 0.05, 10.0)
        assert eps_star(p, q) == pytest.approx(scan_eps_star(p, q), rel=1e-6)


@given(p=st.floats(2.1, 8.0), dq=st.floats(0.1, 3.0), frac=st.floats(0.0, 0.999))
def test_eps_star_separates_sign(p, dq, frac):
    q = p + dq
    es = eps_star(p, q)
    z = np.geomspace(1e-4, 1.0, 4000)
    F = lambda e: z ** p / p - z ** q / q - e * z * z / 2
    assert np.all(F(es * (1 + 1e-9)) <= 1e-15)
    zstar = (q * (p - 2) / (p * (q - 2))) ** (1 / (q - p))
    below = zstar ** p / p - zstar ** q / q - es * frac * zstar ** 2 / 2
    assert below > 0


def test_limit_constants():
    sup = limit_constants(ProblemParams(3, 0.5, 4.0, 6.0))
    assert sup.supercritical_p_norm == pytest.approx(2.0, abs=1e-14)
    assert sup.supercritical_q_norm == pytest.approx(1.0, abs=1e-14)
    sub = limit_constants(ProblemParams(3, 0.5, 2.5, 4.0))
    assert sub.subcritical_two_norm == pytest.approx(2.0 / 3.0, abs=1e-14)
    assert sub.subcritical_p_norm == pytest.approx(5.0 / 3.0, abs=1e-14)
    crit = limit_constants(ProblemParams(3, 0.5, 3.0, 5.0))
    assert crit.eps_star == pytest.approx(eps_star(3, 5))
