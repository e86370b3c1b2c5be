"""Cross-spectral densities: evaluation, validation, covariance quadrature,
tail integrability. Oracles are closed forms derived independently:

* pure-lag cross-covariance: with B^2_t = R (B^1_{t-th} - B^1_{-th}) plus an
  independent remainder, E[B^1_t B^2_s] = (R/2)(|t+th| + |s-th| - |s-t-th| - |th|).
* increment cross-covariance: triangle R * max(0, dt - |k dt - th|).
* tail integrability, |f| constant r: integral is log(1-r)/lambda0.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leadlag_lab.spectral import (
    CrossSpectralDensity,
    SymmetryViolationError,
    cross_cov_quadrature,
    default_validation_grid,
    eval_csd,
    gsvz_check,
    increment_cross_cov,
    validate_csd,
)


def purelag_closed_form(R, th, t, s):
    return 0.5 * R * (abs(t + th) + abs(s - th) - abs(s - t - th) - abs(th))


# -- construction and evaluation ---------------------------------------------


def test_pure_lag_eval():
    f = CrossSpectralDensity.pure_lag(1.0, 2.0)
    # e^{-2 pi i} = 1
    assert eval_csd(f, math.pi) == pytest.approx(1.0 + 0.0j, abs=1e-12)


def test_multiscale_band_membership():
    f = CrossSpectralDensity.multiscale([0.5], [0.0])
    # lam = 2 lies in the first dyadic band (pi/2, pi]; e^0 = 1.
    assert eval_csd(f, 2.0) == pytest.approx(0.5 + 0.0j, abs=1e-15)
    # The base band [-pi/2, pi/2] carries 0 unless a base coefficient is given.
    assert eval_csd(f, 1.0) == 0.0
    assert eval_csd(f, 0.0) == 0.0
    # Beyond the last band the density vanishes.
    assert eval_csd(f, 4.0) == 0.0
    f2 = CrossSpectralDensity.multiscale([0.5], [0.0], base_R=0.25)
    assert eval_csd(f2, 1.0) == pytest.approx(0.25 + 0.0j, abs=1e-15)


def test_multiscale_band_edges():
    f = CrossSpectralDensity.multiscale([0.3, -0.7], [0.0, 0.0])
    assert eval_csd(f, math.pi) == pytest.approx(0.3 + 0.0j, abs=1e-12)
    assert eval_csd(f, math.pi * 1.0000001) == pytest.approx(-0.7 + 0.0j, abs=1e-12)
    assert eval_csd(f, 2 * math.pi) == pytest.approx(-0.7 + 0.0j, abs=1e-12)


def test_zero_coefficients_give_zero():
    f = CrossSpectralDensity.multiscale([0.0, 0.0], [1.0, 2.0])
    lam = np.linspace(-20, 20, 101)
    np.testing.assert_array_equal(np.atleast_1d(eval_csd(f, lam)), np.zeros(101))


def test_tabulated_eval_and_domain_error():
    lam = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    vals = np.array([0.5, 0.25, 0.0, 0.25, 0.5], dtype=complex)
    f = CrossSpectralDensity.tabulated(lam, vals)
    assert eval_csd(f, 0.5) == pytest.approx(0.125 + 0.0j)
    with pytest.raises(ValueError):
        eval_csd(f, 2.5)


def test_construction_rejects_bad_coefficients():
    with pytest.raises(ValueError):
        CrossSpectralDensity.pure_lag(1.5, 0.0)
    with pytest.raises(ValueError):
        CrossSpectralDensity.multiscale([0.5, 1.2], [0.0, 0.0])
    with pytest.raises(ValueError):
        CrossSpectralDensity.tabulated([0.0, 1.0], [0.0, 0.0])  # asymmetric grid


def test_serialization_round_trip():
    for f in [
        CrossSpectralDensity.pure_lag(0.5, 0.1),
        CrossSpectralDensity.multiscale([0.5, -0.25], [0.0, 1.0], base_R=0.1),
        CrossSpectralDensity.tabulated([-1.0, 0.0, 1.0], [0.5 - 0.1j, 1.0, 0.5 + 0.1j]),
    ]:
        g = CrossSpectralDensity.loads(f.dumps())
        assert g.kind == f.kind
        lam = np.linspace(-0.9, 0.9, 7)
        np.testing.assert_allclose(
            np.atleast_1d(eval_csd(g, lam)), np.atleast_1d(eval_csd(f, lam)), atol=1e-15
        )
    with pytest.raises(ValueError):
        CrossSpectralDensity.from_dict({"kind": "pure_lag", "R0": 0.5, "theta0": 0.0, "bogus": 1})


# -- validation ---------------------------------------------------------------


def test_validate_zero_density_passes():
    f = CrossSpectralDensity.multiscale([0.0], [0.0])
    rep = validate_csd(f, default_validation_grid(f))
    assert rep.passed and rep.max_abs == 0.0


def test_validate_flags_linf_violation():
    # Constructors reject |R| > 1, so plant the violation in a tabulated table.
    lam = np.array([-1.0, 0.0, 1.0])
    f = CrossSpectralDensity.tabulated(lam, np.array([1.5, 0.0, 1.5], dtype=complex))
    rep = validate_csd(f, lam)
    assert not rep.linf_ok and not rep.passed
    assert rep.max_abs == pytest.approx(1.5)


def test_validate_flags_hermite_violation():
    lam = np.array([-1.0, 0.0, 1.0])
    vals = np.array([0.5 - 0.2j, 0.0, 0.5 + 0.2j + 1e-6], dtype=complex)
    f = CrossSpectralDensity.tabulated(lam, vals)
    rep = validate_csd(f, lam)
    assert not rep.hermite_ok and not rep.passed
    assert rep.max_hermite_violation == pytest.approx(1e-6, rel=1e-3)


@given(
    st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=5),
    st.lists(st.floats(-2.0, 2.0), min_size=5, max_size=5),
)
def test_validate_passes_for_any_legal_multiscale(R, theta):
    f = CrossSpectralDensity.multiscale(R, theta[: len(R)])
    rep = validate_csd(f, default_validation_grid(f))
    assert rep.passed


# -- cross-covariance quadrature ----------------------------------------------


def test_cross_cov_zero_density():
    f = CrossSpectralDensity.multiscale([0.0], [0.0])
    assert cross_cov_quadrature(f, 1.3, 0.7) == 0.0


def test_cross_cov_pure_lag_examples():
    # Oracle: B^2 is a shifted copy of B^1, so E[B^1_2 B^2_2] = min(t, s - th) = 1.
    f = CrossSpectralDensity.pure_lag(1.0, 1.0)
    assert cross_cov_quadrature(f, 2.0, 2.0) == pytest.approx(1.0, abs=1e-10)
    f2 = CrossSpectralDensity.pure_lag(0.5, 0.0)
    assert cross_cov_quadrature(f2, 1.0, 1.0) == pytest.approx(0.5, abs=1e-10)


@given(
    st.floats(-1.0, 1.0),
    st.floats(-0.5, 0.5),
    st.floats(-3.0, 3.0),
    st.floats(-3.0, 3.0),
)
def test_cross_cov_pure_lag_closed_form(R, th, t, s):
    f = CrossSpectralDensity.pure_lag(R, th)
    got = cross_cov_quadrature(f, t, s)
    assert got == pytest.approx(purelag_closed_form(R, th, t, s), abs=1e-9)


def test_cross_cov_multiscale_matches_tabulated_version():
    # Same density represented two ways must integrate to nearly the same value.
    f = CrossSpectralDensity.multiscale([0.6, -0.3], [0.2, 0.05])
    lam_pos = np.linspace(1e-6, 2 * math.pi, 4001)
    lam = np.concatenate([-lam_pos[::-1], [0.0], lam_pos])
    tab = CrossSpectralDensity.tabulated(lam, np.atleast_1d(eval_csd(f, lam)))
    for t, s in [(1.0, 1.0), (0.5, 1.5), (2.0, 1.0)]:
        exact = cross_cov_quadrature(f, t, s)
        approx = cross_cov_quadrature(tab, t, s)
        assert approx == pytest.approx(exact, abs=5e-4)


def test_cross_cov_symmetry_violation_raises():
    # Constant imaginary f breaks conj(f(lam)) = f(-lam) and leaves a pure
    # imaginary two-sided integral, which the residue check must reject.
    lam = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    vals = np.full(5, 0.8j)
    f = CrossSpectralDensity.tabulated(lam, vals)
    assert not validate_csd(f, lam).hermite_ok
    with pytest.raises(SymmetryViolationError):
        cross_cov_quadrature(f, 1.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(
    st.floats(-1.0, 1.0),
    st.floats(-0.3, 0.3),
    st.floats(0.1, 2.0),
    st.floats(0.1, 2.0),
    st.floats(0.05, 1.0),
)
def test_cross_cov_stationary_increments(R, th, t, s, h):
    # cov(t,s) + cov(t+h,s+h) - cov(t+h,s) - cov(t,s+h) must depend on t-s only.
    f = CrossSpectralDensity.multiscale([R, -R / 2], [th, 0.0])

    def incr(t0, s0):
        return (
            cross_cov_quadrature(f, t0, s0)
            + cross_cov_quadrature(f, t0 + h, s0 + h)
            - cross_cov_quadrature(f, t0 + h, s0)
            - cross_cov_quadrature(f, t0, s0 + h)
        )

    shift = 0.37
    assert incr(t, s) == pytest.approx(incr(t + shift, s + shift), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=4),
    st.floats(0.05, 3.0),
    st.floats(0.05, 3.0),
)
def test_cross_cov_cauchy_schwarz(R, t, s):
    f = CrossSpectralDensity.multiscale(R, [0.1] * len(R))
    got = cross_cov_quadrature(f, t, s)
    assert abs(got) <= math.sqrt(t * s) + 1e-8


# -- increment covariance ------------------------------------------------------


@given(st.floats(-1.0, 1.0), st.integers(-30, 30))
def test_increment_cov_pure_lag_triangle(R, k):
    dt, th = 0.01, 0.1
    f = CrossSpectralDensity.pure_lag(R, th)
    got = increment_cross_cov(f, dt, k)
    assert got == pytest.approx(R * max(0.0, dt - abs(k * dt - th)), abs=1e-12)


def test_increment_cov_consistency_with_cross_cov():
    # Summing increment covariances reconstructs E[B^1_t B^2_s] on a grid.
    f = CrossSpectralDensity.multiscale([0.7, 0.2], [0.15, 0.0])
    dt = 0.25
    nt, ns = 4, 8  # t = 1, s = 2
    total = sum(
        increment_cross_cov(f, dt, m2 - m1) for m1 in range(nt) for m2 in range(ns)
    )
    assert total == pytest.approx(cross_cov_quadrature(f, nt * dt, ns * dt), abs=1e-9)


# -- tail integrability ---------------------------------------------------------


def test_gsvz_zero_density():
    f = CrossSpectralDensity.multiscale([0.0], [0.0])
    rep = gsvz_check(f, 1.0)
    assert rep.value == 0.0 and not rep.diverged


def test_gsvz_constant_half():
    # |f| = 0.5 everywhere: integral over [1, inf) of log(0.5)/lam^2 = log(0.5).
    f = CrossSpectralDensity.pure_lag(0.5, 0.3)
    rep = gsvz_check(f, 1.0)
    assert rep.value == pytest.approx(math.log(0.5), abs=1e-6)
    assert rep.quadrature_error_estimate == 0.0


def test_gsvz_multiscale_below_one_is_finite():
    f = CrossSpectralDensity.multiscale([0.9] * 30, [0.0] * 30)
    rep = gsvz_check(f, 1.0)
    assert not rep.diverged
    # Hand value: log(0.1) * sum_j 1/(2^j pi) over bands intersected with [1, inf).
    hand = math.log(0.1) * sum(1.0 / (2.0**j * math.pi) for j in range(30))
    assert rep.value == pytest.approx(hand, rel=1e-12)


def test_gsvz_modulus_one_diverges():
    f = CrossSpectralDensity.multiscale([1.0] * 10, [0.0] * 10)
    rep = gsvz_check(f, 1.0)
    assert rep.diverged and rep.value == "diverged"
    f2 = CrossSpectralDensity.pure_lag(1.0, 0.0)
    assert gsvz_check(f2, 5.0).diverged


def test_gsvz_value_nonpositive_and_monotone():
    # Raising |f| pointwise (|R| -> sqrt(|R|) >= |R|) can only lower the value.
    R = [0.3, -0.8, 0.5]
    f = CrossSpectralDensity.multiscale(R, [0.0, 0.0, 0.0])
    bigger = CrossSpectralDensity.multiscale(
        [math.copysign(math.sqrt(abs(r)), r) for r in R], [0.0, 0.0, 0.0]
    )
    a, b = gsvz_check(f, 0.5), gsvz_check(bigger, 0.5)
    assert a.value <= 0.0 and b.value <= a.value


def test_gsvz_tabulated_matches_exact():
    f = CrossSpectralDensity.pure_lag(0.5, 0.0)
    lam_pos = np.linspace(0.01, 40.0, 2000)
    lam = np.concatenate([-lam_pos[::-1], [0.0], lam_pos])
    tab = CrossSpectralDensity.tabulated(lam, np.atleast_1d(eval_csd(f, lam)))
    rep = gsvz_check(tab, 1.0)
    # Tabulated support ends at 40, so the truncated exact value is the oracle.
    hand = math.log(0.5) * (1.0 - 1.0 / 40.0)
    assert rep.value == pytest.approx(hand, abs=1e-6)


def test_gsvz_rejects_bad_lambda0():
    with pytest.raises(ValueError):
        gsvz_check(CrossSpectralDensity.pure_lag(0.5, 0.0), 0.0)


def test_gsvz_partials_are_reported():
    rep = gsvz_check(CrossSpectralDensity.pure_lag(0.9, 0.0), 1.0)
    assert len(rep.partials) >= 3
    assert all(b <= a + 1e-15 for a, b in zip(rep.partials, rep.partials[1:]))
