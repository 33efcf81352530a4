"""Numerics kernel tests against independent high-precision oracles."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlqsim.numerics import (
    LogLogFit,
    QuadratureSpec,
    bpsk_mrc_ser,
    fit_loglog,
    gamma_tail,
    integrate_gamma_weighted,
    minimize_1d,
    q_function,
)

mpmath.mp.dps = 40


def q_oracle(x: float) -> float:
    return float(0.5 * mpmath.erfc(x / mpmath.sqrt(2)))


class TestQFunction:
    def test_accuracy_against_mpmath(self):
        xs = np.arange(-8.0, 8.0 + 1e-9, 0.01)
        got = q_function(xs)
        want = np.array([q_oracle(x) for x in xs])
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_scalar_path_matches_vector_path(self):
        for x in (-7.3, -1.0, 0.0, 0.5, 2.49, 2.51, 6.0):
            assert q_function(x) == float(q_function(np.array([x]))[0])

    def test_known_values(self):
        assert q_function(0.0) == pytest.approx(0.5, abs=1e-15)
        # classic table value
        assert q_function(1.0) == pytest.approx(0.15865525393145705, abs=1e-13)

    def test_symmetry(self):
        xs = np.linspace(0.0, 8.0, 500)
        assert np.max(np.abs(q_function(-xs) + q_function(xs) - 1.0)) < 1e-13

    def test_monotone_decreasing(self):
        # strictly decreasing where float resolution allows; near Q ~ 1 the
        # values plateau at the 1-ulp level so we test the central range
        xs = np.arange(-6.0, 6.0, 0.01)
        q = q_function(xs)
        assert np.all(np.diff(q) < 0.0)

    def test_deep_tail_underflow_is_graceful(self):
        assert q_function(50.0) >= 0.0
        assert q_function(1e6) == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            q_function(float("nan"))
        with pytest.raises(ValueError):
            q_function(np.array([1.0, float("inf")]))

    @given(st.floats(min_value=-8.0, max_value=8.0, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_range_property(self, x):
        q = q_function(x)
        assert 0.0 < q < 1.0


class TestGammaTail:
    def test_against_mpmath(self):
        for t in (1, 2, 3, 4, 6):
            for x in (0.01, 0.5, 1.0, 3.0, 10.0, 50.0):
                want = float(mpmath.gammainc(t, x, mpmath.inf, regularized=True))
                assert gamma_tail(t, x) == pytest.approx(want, rel=1e-13)

    def test_vectorized(self):
        xs = np.array([-1.0, 0.0, 0.5, 2.0, 800.0])
        got = gamma_tail(2, xs)
        assert got[0] == 1.0 and got[1] == 1.0 and got[-1] == 0.0
        assert got[2] == pytest.approx(gamma_tail(2, 0.5))

    def test_rejects_bad_t(self):
        with pytest.raises(ValueError):
            gamma_tail(0, 1.0)


class TestGammaWeightedQuadrature:
    def test_constant_integrand(self):
        for t in (1, 2, 4):
            assert integrate_gamma_weighted(lambda x: 1.0, t) == pytest.approx(1.0, rel=1e-10)

    def test_mean_of_gamma(self):
        for t in (1, 2, 3):
            assert integrate_gamma_weighted(lambda x: x, t) == pytest.approx(float(t), rel=1e-9)

    def test_matches_closed_form_mrc(self):
        # dual route: the quadrature and the combinatorial closed form are
        # independent derivations of the same average
        spec = QuadratureSpec(relative_tolerance=1e-10)
        worst = 0.0
        for t in (1, 2, 3, 4):
            for P in (1.0, 10.0, 100.0, 1000.0, 1e5):
                got = integrate_gamma_weighted(
                    lambda x: q_function(np.sqrt(2.0 * x * P)), t, spec
                )
                want = float(bpsk_mrc_ser(t, P))
                worst = max(worst, abs(got - want) / want)
        assert worst <= 1e-8

    def test_partial_range_against_mpmath(self):
        # integral of e^{-s x} over the gamma tail has a closed form
        for t in (1, 2, 3):
            for lower in (0.2, 1.0, 4.0):
                s = 1.5
                got = integrate_gamma_weighted(
                    lambda x: math.exp(-s * x), t, QuadratureSpec(1e-10), lower=lower
                )
                want = float(
                    (1 + s) ** -t
                    * mpmath.gammainc(t, lower * (1 + s), mpmath.inf, regularized=True)
                )
                assert got == pytest.approx(want, rel=1e-8)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            integrate_gamma_weighted(lambda x: 1.0, 0)


class TestFitLogLog:
    def test_exact_power_law(self):
        P = [10.0, 100.0, 1000.0, 1e4]
        fit = fit_loglog([(p, 4.0 / p**2) for p in P])
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert math.exp(fit.intercept) == pytest.approx(4.0, rel=1e-12)
        assert fit.max_abs_residual < 1e-12

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            fit_loglog([(1.0, 1.0)])
        with pytest.raises(ValueError):
            fit_loglog([(1.0, 1.0), (1.0, 2.0)])
        with pytest.raises(ValueError):
            fit_loglog([(1.0, 1.0), (2.0, -1.0)])

    @given(
        st.floats(min_value=0.1, max_value=4.0),
        st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_recovers_slope_and_gain(self, d, g):
        P = [10.0, 50.0, 250.0, 1250.0]
        fit = fit_loglog([(p, 1.0 / (g * p**d)) for p in P])
        assert fit.slope == pytest.approx(-d, abs=1e-9)


class TestMinimize1d:
    def test_quadratic(self):
        x, v = minimize_1d(lambda x: (x - 1.7) ** 2 + 3.0, 0.0, 5.0)
        assert x == pytest.approx(1.7, abs=1e-6)
        assert v == pytest.approx(3.0, abs=1e-12)

    def test_gaussian_ratio_minimum(self):
        # oracle: dense grid scan of Q(x) e^{x^2} at high precision
        grid = [mpmath.mpf(k) / 2000 for k in range(0, 4001)]
        vals = [0.5 * mpmath.erfc(x / mpmath.sqrt(2)) * mpmath.e ** (x * x) for x in grid]
        k = min(range(len(vals)), key=lambda i: vals[i])
        x, v = minimize_1d(lambda x: q_function(x) * math.exp(x * x), 0.0, 5.0)
        assert x == pytest.approx(float(grid[k]), abs=1e-3)
        assert v == pytest.approx(float(vals[k]), rel=1e-6)
        # frozen values from the scan
        assert v == pytest.approx(0.3930596, abs=1e-6)
        assert x == pytest.approx(0.612, abs=1e-3)

    def test_rejects_bad_bracket(self):
        with pytest.raises(ValueError):
            minimize_1d(lambda x: x, 1.0, 1.0)


class TestBpskMrcSer:
    def test_single_branch_closed_form(self):
        for P in (0.5, 1.0, 10.0, 100.0):
            want = 0.5 * (1.0 - math.sqrt(P / (1.0 + P)))
            assert float(bpsk_mrc_ser(1, P)) == pytest.approx(want, rel=1e-13)

    def test_zero_snr_limit(self):
        for t in (1, 2, 3):
            assert float(bpsk_mrc_ser(t, 0.0)) == pytest.approx(0.5, abs=1e-12)

    def test_reference_value(self):
        # t = 2, P = 10: mu = sqrt(10/11), [0.5(1-mu)]^2 [1 + 2*0.5(1+mu)]
        mu = math.sqrt(10.0 / 11.0)
        want = (0.5 * (1 - mu)) ** 2 * (1.0 + 2.0 * 0.5 * (1 + mu))
        assert float(bpsk_mrc_ser(2, 10.0)) == pytest.approx(want, rel=1e-13)
        assert float(bpsk_mrc_ser(2, 10.0)) == pytest.approx(1.599101e-3, rel=1e-6)

    def test_vectorized_and_monotone(self):
        snr = np.geomspace(0.01, 1e4, 50)
        ser = bpsk_mrc_ser(3, snr)
        assert ser.shape == snr.shape
        assert np.all(np.diff(ser) < 0.0)

    def test_diversity_slope(self):
        for t in (1, 2, 4):
            lo = float(bpsk_mrc_ser(t, 1e4))
            hi = float(bpsk_mrc_ser(t, 1e5))
            assert math.log10(lo / hi) == pytest.approx(t, abs=0.02)
