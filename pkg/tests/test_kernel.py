import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from betamix.errors import DomainError
from betamix.kernel import (BetaParam, bern_kl, cubic_coefficient, exponent_taylor, kernel_log_pdf,
                            laplace_pdf, local_expanded_pdf, log_pdf, log_stirling_bracket, pdf,
                            to_shape)
from betamix.numkit import integrate

ALPHAS = [0.5, 1.0, 10.0, 100.0, 1000.0]
EPSS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def kernel_mass_and_mean(alpha, eps):
    """Integral of g and x g; the right half goes through the reflection
    g_{alpha,eps}(1 - y) = g_{alpha,1-eps}(y) so both endpoint
    singularities sit at 0, where floating point resolves them."""
    p, q = BetaParam(alpha, eps), BetaParam(alpha, 1.0 - eps)
    tol = 1e-11
    m_left, _ = integrate(lambda x: pdf(p, x), 0.0, 0.5, tol=tol, points=[eps])
    m_right, _ = integrate(lambda y: pdf(q, y), 0.0, 0.5, tol=tol, points=[1 - eps])
    x_left, _ = integrate(lambda x: x * pdf(p, x), 0.0, 0.5, tol=tol, points=[eps])
    x_right, _ = integrate(lambda y: (1 - y) * pdf(q, y), 0.0, 0.5, tol=tol, points=[1 - eps])
    return m_left + m_right, x_left + x_right


def exact_exponent(eps, x):
    return bern_kl(eps, x) / (eps * (1.0 - eps))


class TestShapes:
    def test_examples(self):
        assert to_shape(BetaParam(1.0, 0.5)) == (2.0, 2.0)
        a, b = to_shape(BetaParam(2.0, 0.25))
        assert a == pytest.approx(8.0 / 3.0) and b == pytest.approx(8.0)

    @given(st.floats(1e-3, 1e6), st.floats(1e-6, 1 - 1e-6))
    def test_mean_identity(self, alpha, eps):
        a, b = to_shape(BetaParam(alpha, eps))
        assert a / (a + b) == pytest.approx(eps, rel=1e-14)

    @pytest.mark.parametrize("alpha, eps", [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.0),
                                            (np.inf, 0.5)])
    def test_invalid(self, alpha, eps):
        with pytest.raises(DomainError):
            BetaParam(alpha, eps)


class TestLogPdf:
    def test_closed_forms(self):
        assert log_pdf(BetaParam(1.0, 0.5), 0.5) == pytest.approx(math.log(1.5), rel=1e-14)
        assert log_pdf(BetaParam(2.0, 0.5), 0.5) == pytest.approx(math.log(2.1875), rel=1e-14)

    def test_against_scipy(self):
        x = np.linspace(0.01, 0.99, 50)
        for alpha in ALPHAS:
            for eps in EPSS:
                a, b = to_shape(BetaParam(alpha, eps))
                np.testing.assert_allclose(log_pdf(BetaParam(alpha, eps), x),
                                           stats.beta.logpdf(x, a, b), rtol=1e-10, atol=1e-10)

    def test_large_alpha_against_mpmath(self):
        alpha, eps, x = 1e6, 0.3, 0.3005
        a, b = alpha / (1 - eps), alpha / eps
        mpmath.mp.dps = 40
        ref = ((a - 1) * mpmath.log(x) + (b - 1) * mpmath.log(1 - x)
               - mpmath.loggamma(a) - mpmath.loggamma(b) + mpmath.loggamma(a + b))
        mpmath.mp.dps = 15
        assert log_pdf(BetaParam(alpha, eps), x) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_normalization_and_mean(self, alpha):
        for eps in EPSS:
            mass, mean = kernel_mass_and_mean(alpha, eps)
            assert abs(mass - 1.0) <= 1e-8
            assert abs(mean - eps) <= 1e-7

    @pytest.mark.parametrize("x", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            log_pdf(BetaParam(1.0, 0.5), x)

    def test_vectorised_kernel_broadcasts(self):
        eps = np.array([0.2, 0.7])[:, None]
        x = np.array([0.1, 0.5, 0.9])[None, :]
        out = kernel_log_pdf(5.0, eps, x)
        assert out.shape == (2, 3)
        assert out[1, 2] == pytest.approx(log_pdf(BetaParam(5.0, 0.7), 0.9), rel=1e-14)


class TestBernKL:
    def test_zero_on_diagonal(self):
        assert bern_kl(0.3, 0.3) == 0.0

    def test_high_precision_values(self):
        def ref(e, x):
            e, x = mpmath.mpf(e), mpmath.mpf(x)
            return float(e * mpmath.log(e / x) + (1 - e) * mpmath.log((1 - e) / (1 - x)))
        assert bern_kl(0.5, 0.25) == pytest.approx(0.1438410362258904, rel=1e-14)
        assert bern_kl(0.5, 0.25) == pytest.approx(ref(0.5, 0.25), rel=1e-14)
        # asymmetric; value from the defining formula at 30 digits
        assert bern_kl(0.25, 0.5) == pytest.approx(ref(0.25, 0.5), rel=1e-14)
        assert bern_kl(0.25, 0.5) == pytest.approx(0.13081203594113694, rel=1e-14)

    @given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
    def test_nonnegative(self, e, x):
        assert bern_kl(e, x) >= 0.0

    @pytest.mark.parametrize("e, x", [(0.1, 1e-300), (0.9, 1e-12), (0.2, 1 - 1e-12), (0.05, 0.9)])
    def test_far_from_diagonal(self, e, x):
        E, X = mpmath.mpf(e), mpmath.mpf(x)
        ref = float(E * mpmath.log(E / X) + (1 - E) * mpmath.log((1 - E) / (1 - X)))
        assert bern_kl(e, x) == pytest.approx(ref, rel=1e-12)

    def test_small_difference_accuracy(self):
        e, d = 0.4, 1e-9
        # K ~ d^2 / (2 e (1 - e)) to leading order
        assert bern_kl(e, e + d) == pytest.approx(d * d / (2 * e * (1 - e)), rel=1e-6)


class TestLaplace:
    def test_error_at_large_alpha(self):
        p = BetaParam(1e4, 0.5)
        rel = abs(laplace_pdf(p, 0.5) / pdf(p, 0.5) - 1.0)
        assert rel <= 10.0 / 1e4

    def test_error_slope(self):
        alphas = 10.0 ** np.array([2, 2.5, 3, 3.5, 4])
        eps, x = 0.3, 0.31
        errs = [abs(laplace_pdf(BetaParam(a, eps), x) / pdf(BetaParam(a, eps), x) - 1) for a in alphas]
        slope = np.polyfit(np.log(alphas), np.log(errs), 1)[0]
        assert -1.3 <= slope <= -0.7

    def test_doubling_ratio(self):
        for a in (100.0, 1000.0):
            e1 = abs(laplace_pdf(BetaParam(a, 0.4), 0.41) / pdf(BetaParam(a, 0.4), 0.41) - 1)
            e2 = abs(laplace_pdf(BetaParam(2 * a, 0.4), 0.41) / pdf(BetaParam(2 * a, 0.4), 0.41) - 1)
            assert e1 / e2 == pytest.approx(2.0, rel=0.3)

    def test_higher_order_is_more_accurate(self):
        p = BetaParam(200.0, 0.3)
        errs = [abs(laplace_pdf(p, 0.3, k) / pdf(p, 0.3) - 1) for k in (0, 1, 3)]
        assert errs[0] > errs[1] > errs[2]

    def test_exponent_is_exact(self):
        # dividing out the correction factors leaves identical exponents
        p = BetaParam(50.0, 0.35)
        x = np.linspace(0.2, 0.5, 7)
        lhs = np.log(laplace_pdf(p, x, 0))
        rhs = log_pdf(p, x) - float(log_stirling_bracket(p.alpha, p.eps))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-13)

    def test_precondition(self):
        with pytest.raises(DomainError):
            laplace_pdf(BetaParam(0.5, 0.5), 0.5)


class TestExponentTaylor:
    def test_symmetry_point(self):
        assert exponent_taylor(0.5, 4).c == pytest.approx(0.0, abs=1e-15)

    def test_quarter(self):
        assert exponent_taylor(0.25, 3).c == pytest.approx(2.0 / 3.0, rel=1e-12)

    @pytest.mark.parametrize("x", np.round(np.arange(0.1, 1.0, 0.1), 1))
    def test_cubic_three_ways(self, x):
        series = exponent_taylor(x, 6)
        assert series.c == pytest.approx(float(cubic_coefficient(x)), abs=1e-6)
        # finite differences of the exact exponent in u = (x - eps)/(x(1-x))
        s = x * (1 - x)
        h = 2e-3
        u = h * np.arange(-3, 4)
        vals = np.array([exact_exponent(x - ui * s, x) for ui in u])
        # third derivative at 0 by the 7-point central stencil
        d3 = (-vals[6] + 8 * vals[5] - 13 * vals[4] + 13 * vals[2] - 8 * vals[1] + vals[0]) / (8 * h ** 3)
        assert 2.0 * d3 / 6.0 == pytest.approx(series.c, abs=1e-6)

    def test_leading(self):
        x = 0.3
        assert exponent_taylor(x, 3).leading == pytest.approx(1 / (2 * x * x * (1 - x) ** 2))

    def test_series_matches_exact_exponent(self):
        x = 0.35
        series = exponent_taylor(x, 10)
        s = x * (1 - x)
        for u in (-0.05, 0.02, 0.08):
            assert series.exponent(u) == pytest.approx(exact_exponent(x - u * s, x), rel=1e-9)

    def test_polyfit_of_exact_exponent(self):
        x = 0.7
        s = x * (1 - x)
        u = np.linspace(-0.02, 0.02, 41)
        y = np.array([exact_exponent(x - ui * s, x) for ui in u])
        coef = np.polynomial.polynomial.polyfit(u, y, 7)
        assert 2 * coef[3] == pytest.approx(float(cubic_coefficient(x)), abs=1e-6)
        assert coef[2] == pytest.approx(0.5, abs=1e-9)

    def test_domain(self):
        with pytest.raises(DomainError):
            exponent_taylor(0.5, 2)
        with pytest.raises(DomainError):
            exponent_taylor(5e-5, 3)


class TestLocalExpanded:
    def test_at_mean(self):
        p = BetaParam(300.0, 0.4)
        want = (math.sqrt(p.alpha) / (math.sqrt(2 * math.pi) * 0.24)
                * math.exp(float(log_stirling_bracket(p.alpha, p.eps))))
        assert local_expanded_pdf(p, 0.4, 3, 1) == pytest.approx(want, rel=1e-14)
        assert local_expanded_pdf(p, 0.4, 3, 1) == pytest.approx(pdf(p, 0.4), rel=1e-12)

    def test_example_accuracy(self):
        p = BetaParam(400.0, 0.5)
        assert abs(local_expanded_pdf(p, 0.52, 3, 1) / pdf(p, 0.52) - 1) <= 1e-2

    def test_improves_with_k2(self):
        p = BetaParam(400.0, 0.45)
        x = 0.47
        errs = [abs(local_expanded_pdf(p, x, 9, k2) / pdf(p, x) - 1) for k2 in (0, 1, 2)]
        assert errs[0] > errs[1] > errs[2]

    def test_window(self):
        with pytest.raises(DomainError, match="window"):
            local_expanded_pdf(BetaParam(400.0, 0.5), 0.8, 3, 1)
