import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from piwcov import kernels
from piwcov.estimators import (
    LinearMap,
    PiwMap,
    floor_shrink,
    iw_map,
    map_eigenvalues,
    match_linear_regularizer,
    params_from_floor_shrink,
    piw_map,
    q2_curve_params,
    quantile_lmax_mle,
    regularization_curve,
    sample_covariance,
    solve_eigen_equation,
)
from piwcov.exceptions import InsufficientData, InvalidInput, NotDiagonalScalePrior, NotPositiveDefinite
from piwcov.matcore import SymPD, psd_order_leq
from piwcov.prior import PiwPrior

from conftest import random_orthonormal, random_spd


def sigma_root_oracle(ell, n, p, m, q, alpha=1.0):
    """Positive root of N x^q - n ell x^(q-1) - q alpha^q = 0 via mpmath polyroots."""
    big_n = n + p + q * m + 1
    coeffs = [mpmath.mpf(big_n), -mpmath.mpf(n) * mpmath.mpf(ell)] + [0] * (q - 2) + [-q * mpmath.mpf(alpha) ** q]
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=80)
    real = [float(mpmath.re(r)) for r in roots if abs(mpmath.im(r)) < 1e-20 and mpmath.re(r) > 0]
    assert len(real) == 1
    return real[0]


class TestSampleCovariance:
    def test_two_points(self):
        mean, s = sample_covariance([[0.0], [2.0]])
        assert mean[0] == 1.0 and s.entries[0, 0] == 1.0

    def test_constant(self):
        _, s = sample_covariance(np.ones((5, 3)))
        assert_allclose(s.entries, 0.0)

    def test_singular_when_n_le_p(self, rng):
        _, s = sample_covariance(rng.standard_normal((4, 6)))
        assert abs(s.eigenvalues[-1]) < 1e-12
        assert np.sum(s.eigenvalues > 1e-10) == 3

    def test_needs_two(self):
        with pytest.raises(InsufficientData):
            sample_covariance([[1.0, 2.0]])


class TestIwMap:
    def test_floor(self):
        out = iw_map(np.zeros((3, 3)), 5, 2.0 * np.eye(3), 4.0)
        assert_allclose(out.entries, 2.0 * np.eye(3) / 13.0)

    def test_scalar(self):
        assert iw_map([[2.0]], 4, [[1.0]], 1.0).entries[0, 0] == pytest.approx(9 / 7)

    def test_matches_q1_piw(self, rng):
        s = random_spd(rng, 4)
        prior = PiwPrior.scalar(1.7, 4, 6.0, 1)
        assert_allclose(piw_map(s, 9, prior).sigma_hat.entries, iw_map(s, 9, 1.7 * np.eye(4), 6.0).entries, atol=1e-13)


class TestSolveEigenEquation:
    def test_linear_at_zero(self):
        assert solve_eigen_equation(0.0, 10, 5, 7.0, 1) == pytest.approx(23.0, rel=1e-13)

    @pytest.mark.parametrize("q", [2, 3, 4, 6])
    def test_power_at_zero(self, q):
        big_n = 10 + 5 + q * 7.0 + 1
        assert solve_eigen_equation(0.0, 10, 5, 7.0, q) == pytest.approx((big_n / q) ** (1 / q), rel=1e-12)

    def test_q2_quadratic_formula(self, rng):
        for _ in range(50):
            ell = rng.gamma(1.0, 3.0)
            n, p = int(rng.integers(2, 200)), int(rng.integers(1, 100))
            m = p + rng.uniform(0, 50)
            big_n = n + p + 2 * m + 1
            quad = (-n * ell + math.sqrt((n * ell) ** 2 + 8 * big_n)) / 4
            assert solve_eigen_equation(ell, n, p, m, 2) == pytest.approx(quad, rel=1e-11)

    def test_rejects_negative(self):
        with pytest.raises(InvalidInput):
            solve_eigen_equation(-1.0, 10, 5, 7.0, 2)


class TestPiwMap:
    def test_q2_zero_sample_gives_floor(self):
        n, p, m, alpha = 12, 4, 6.0, 1.5
        sol = piw_map(np.zeros((p, p)), n, PiwPrior.scalar(alpha, p, m, 2))
        floor = math.sqrt(2) * alpha / math.sqrt(n + p + 2 * m + 1)
        assert_allclose(sol.sigma_hat.entries, floor * np.eye(p), rtol=1e-14)

    def test_q2_eigenvalues_closed_form(self, rng):
        n, p, m, alpha = 20, 6, 9.0, 0.7
        s = random_spd(rng, p)
        sol = piw_map(s, n, PiwPrior.scalar(alpha, p, m, 2))
        lam = np.linalg.eigvalsh(s)[::-1]
        big_n = n + p + 2 * m + 1
        expect = n / (2 * big_n) * (lam + np.sqrt(lam**2 + 8 * alpha**2 * big_n / n**2))
        assert_allclose(sol.sigma_hat.eigenvalues, expect, rtol=1e-12)

    def test_q3_scalar_oracle(self):
        prior = PiwPrior.scalar(1.0, 1, 1.5, 3)
        got = piw_map([[2.0]], 10, prior).sigma_hat.entries[0, 0]
        # 16.5 x^3 - 20 x^2 - 3 = 0
        assert got == pytest.approx(sigma_root_oracle(2.0, 10, 1, 1.5, 3), abs=1e-10)
        assert 16.5 * got**3 - 20 * got**2 - 3 == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("q", [3, 4, 5])
    def test_general_q_oracle(self, rng, q):
        for _ in range(20):
            ell = rng.gamma(1.0, 2.0)
            n, p = int(rng.integers(2, 60)), int(rng.integers(1, 30))
            m = p + rng.uniform(0, 10)
            got = map_eigenvalues([ell], n, p, m, q)[0]
            assert got == pytest.approx(sigma_root_oracle(ell, n, p, m, q), abs=1e-10)

    def test_general_psi_matches_scalar_path(self, rng):
        s = random_spd(rng, 5)
        fast = piw_map(s, 8, PiwPrior.scalar(2.0, 5, 5.0, 3))
        slow = piw_map(s, 8, PiwPrior(SymPD(2.0 * np.eye(5)), 5.0, 3))
        assert_allclose(fast.sigma_hat.entries, slow.sigma_hat.entries, atol=1e-12)

    def test_psi_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            PiwPrior(SymPD(np.diag([1.0, -1.0])), 2.0, 2)

    def test_eigenvectors_preserved(self, rng):
        s = random_spd(rng, 6)
        est = piw_map(s, 10, PiwPrior.scalar(1.0, 6, 8.0, 3)).sigma_hat.entries
        comm = est @ s - s @ est
        assert np.linalg.norm(comm) <= 1e-8 * np.linalg.norm(s) * np.linalg.norm(est)

    def test_rotation_equivariance(self, rng):
        s = random_spd(rng, 5)
        v = random_orthonormal(rng, 5)
        prior = PiwPrior.scalar(0.8, 5, 7.0, 2)
        lhs = piw_map(v.T @ s @ v, 9, prior).sigma_hat.entries
        rhs = v.T @ piw_map(s, 9, prior).sigma_hat.entries @ v
        assert_allclose(lhs, rhs, atol=1e-9)

    @given(
        st.integers(1, 8), st.integers(1, 40), st.integers(1, 6),
        st.floats(0, 20), st.floats(0.05, 20), st.integers(0, 2**32 - 1), st.booleans(),
    )
    def test_residuals_and_bounds(self, p, n, q, extra_m, alpha, seed, scalar):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((max(n, 2), p)) * rng.uniform(0.1, 10)
        _, s = sample_covariance(x)
        n = x.shape[0]
        psi = alpha * np.eye(p) if scalar else random_spd(rng, p, 1e3)
        prior = PiwPrior(SymPD(psi), p + extra_m, q, alpha=alpha if scalar else None)
        sol = piw_map(s, n, prior)
        big_n = prior.denominator(n)
        assert sol.residuals.max() <= 1e-10 * big_n
        lower = n / big_n * sol.eigen_s
        upper = 1 + np.maximum(q, n * sol.eigen_s) / big_n
        assert np.all(sol.eigen_map >= lower - 1e-12 * (1 + lower))
        assert np.all(sol.eigen_map <= upper + 1e-12 * upper)
        beta = (q / big_n) ** (1 / q)
        assert psd_order_leq(beta * psi, sol.sigma_hat, tol=1e-9)
        assert psd_order_leq(sol.sigma_hat, beta * psi + n / big_n * s.entries, tol=1e-9)

    def test_large_n_consistency(self):
        """Median of sqrt(n) ||Sigma_hat - S||_F falls at least 2x per decade."""
        rng = np.random.default_rng(7)
        p, q, m = 3, 3, 5.0
        psi = random_spd(rng, p, 5.0)
        prior = PiwPrior(SymPD(psi), m, q)
        root = np.linalg.cholesky(random_spd(rng, p, 10.0))
        medians = []
        for n in (100, 1000, 10000):
            gaps = []
            for _ in range(50):
                x = rng.standard_normal((n, p)) @ root.T
                _, s = sample_covariance(x)
                gaps.append(math.sqrt(n) * np.linalg.norm(piw_map(s, n, prior).sigma_hat.entries - s.entries))
            medians.append(np.median(gaps))
        assert medians[1] <= medians[0] / 2 and medians[2] <= medians[1] / 2


class TestEigenvalueMap:
    grid = np.linspace(0.0, 10.0, 1000)

    @pytest.mark.parametrize("q", [2, 3, 5])
    def test_increasing_and_convex(self, q):
        f = map_eigenvalues(self.grid, 20, 10, 12.0, q)
        d1 = np.diff(f)
        d2 = np.diff(f, 2)
        assert np.all(d1 > 0)
        assert np.all(d2 > 0)

    def test_q2_curve_matches_bisection(self, rng):
        for _ in range(1000):
            ell = rng.gamma(0.5, 4.0)
            n, p = int(rng.integers(2, 300)), int(rng.integers(1, 150))
            m = p + rng.uniform(0, 100)
            closed = kernels.q2_sigma_eigenvalues([ell], n, p, m)[0]
            root, _ = kernels.solve_eigen_batch(np.array([ell]), n, p, m, 2)
            assert closed == pytest.approx(1.0 / root[0], abs=1e-10)

    def test_ordering_across_q(self):
        n, p = 20, 10
        curves = []
        for q in (1, 2, 3, 4):
            alpha, m = params_from_floor_shrink(1.0, 0.9, q, n, p)
            curves.append(PiwMap(q, m, alpha)(self.grid, n, p))
        for lo, hi in zip(curves[1:], curves[:-1]):
            assert np.all(lo <= hi + 1e-12)

    def test_regularization_curve(self):
        assert regularization_curve(LinearMap(0.5, 0.3), 10, [0.0])[0] == 0.3
        pm = PiwMap(2, 12.0, 1.3)
        curve = regularization_curve(pm, 20, [0.0, 1.0, 4.0], p=10)
        direct = [piw_map(np.array([[lam]]), 20, PiwPrior.scalar(1.3, 1, 12.0, 2)).sigma_hat.entries[0, 0]
                  for lam in (0.0, 1.0, 4.0)]
        # a 1x1 MAP uses p = 1, so compare against the map evaluated at p = 1
        assert_allclose(regularization_curve(pm, 20, [0.0, 1.0, 4.0], p=1), direct, rtol=1e-13)
        assert np.all(np.diff(curve) > 0)
        with pytest.raises(InvalidInput):
            regularization_curve(pm, 20, [-1.0], p=10)
        with pytest.raises(InvalidInput):
            regularization_curve(pm, 20, [1.0])


class TestFloorShrink:
    def test_example(self):
        fs = floor_shrink(PiwPrior.scalar(1.0, 10, 10.0, 2), 10)
        assert fs.floor == pytest.approx(math.sqrt(2 / 41), rel=1e-14)
        assert fs.shrink == pytest.approx(10 / 41, rel=1e-14)

    def test_q1(self):
        fs = floor_shrink(PiwPrior.scalar(3.0, 4, 6.0, 1), 7)
        assert fs.floor == pytest.approx(3.0 / 18) and fs.shrink == pytest.approx(7 / 18)

    def test_floor_is_map_at_zero(self):
        prior = PiwPrior.scalar(2.5, 5, 8.0, 4)
        sol = piw_map(np.zeros((5, 5)), 12, prior)
        assert_allclose(sol.sigma_hat.eigenvalues, floor_shrink(prior, 12).floor, rtol=1e-12)

    def test_needs_scalar(self, rng):
        with pytest.raises(NotDiagonalScalePrior):
            floor_shrink(PiwPrior(SymPD(random_spd(rng, 3)), 3.0, 2), 5)


class TestParamsFromFloorShrink:
    def test_boundary(self):
        alpha, m = params_from_floor_shrink(1.0, 1.0, 2, 20, 10)
        assert m == 10.0

    def test_interior(self):
        alpha, m = params_from_floor_shrink(1.0, 0.8, 2, 20, 10)
        assert m == pytest.approx(16.375, rel=1e-14)
        assert alpha == pytest.approx(math.sqrt(63.75 / 2), rel=1e-14)
        assert alpha == pytest.approx(5.6458, abs=5e-5)

    @given(st.floats(0.05, 5), st.floats(0.05, 1.0), st.integers(1, 5), st.integers(2, 300), st.integers(1, 150))
    def test_round_trip(self, floor, sf, q, n, p):
        alpha, m = params_from_floor_shrink(floor, sf, q, n, p)
        assert m >= p
        fs = floor_shrink(PiwPrior.scalar(alpha, p, m, q), n)
        assert fs.floor == pytest.approx(floor, rel=1e-12)
        assert fs.shrink == pytest.approx(sf * n / (n + p + q * p + 1), rel=1e-12)

    @pytest.mark.parametrize("sf", [0.0, 1.01, -0.5])
    def test_bad_shrink(self, sf):
        with pytest.raises(InvalidInput):
            params_from_floor_shrink(1.0, sf, 2, 20, 10)


class TestMatchLinear:
    def test_degenerate(self):
        assert match_linear_regularizer((0.3, 0.0), 0.0, 5.0) == pytest.approx(0.6)

    def test_large_l(self):
        a, b = 0.2, 0.7
        assert match_linear_regularizer((a, b), 1.0, 1e6 * math.sqrt(b)) == pytest.approx(2 * a, abs=1e-3)

    def test_quadrature_oracle(self, rng):
        for _ in range(20):
            a, b = rng.uniform(0.05, 1.0), rng.uniform(0.01, 5.0)
            floor, big_l = rng.uniform(0.1, 2.0), rng.uniform(0.5, 30.0)
            ap = match_linear_regularizer((a, b), floor, big_l)
            resid, _ = integrate.quad(
                lambda x: a * x + a * math.sqrt(x * x + b) - ap * x - floor, 0, big_l, epsabs=1e-12, epsrel=1e-12
            )
            assert abs(resid) / big_l**2 < 1e-9
            xs = np.linspace(0, big_l, 1_000_001)
            trap = integrate.trapezoid(np.sqrt(xs**2 + b), xs)
            expect = a + 2 * a * trap / big_l**2 - 2 * floor / big_l
            assert ap == pytest.approx(expect, abs=1e-9)

    def test_bad_l(self):
        with pytest.raises(InvalidInput):
            match_linear_regularizer((0.3, 0.1), 1.0, 0.0)

    def test_q2_params(self):
        a, b = q2_curve_params(2.0, 10.0, 20, 10)
        big_n = 20 + 10 + 20 + 1
        assert a == pytest.approx(20 / (2 * big_n)) and b == pytest.approx(8 * big_n * 4 / 400)


class TestQuantileLmax:
    def test_chi_square_oracle(self):
        got = quantile_lmax_mle(np.eye(1), 1000, prob=0.5, reps=2000, seed=3)
        assert got == pytest.approx(stats.chi2.ppf(0.5, 999) / 1000, abs=0.01)

    def test_monotone_in_prob(self):
        sig = np.diag([2.0, 1.0, 0.5])
        lo = quantile_lmax_mle(sig, 20, prob=0.5, reps=500, seed=1)
        hi = quantile_lmax_mle(sig, 20, prob=0.99, reps=500, seed=1)
        assert hi > lo

    def test_scale_equivariance(self):
        sig = np.diag([2.0, 1.0, 0.5])
        base = quantile_lmax_mle(sig, 15, reps=300, seed=4)
        scaled = quantile_lmax_mle(3.0 * sig, 15, reps=300, seed=4)
        assert scaled == pytest.approx(3.0 * base, rel=1e-12)

    def test_thread_independent(self):
        a = quantile_lmax_mle(np.eye(4), 10, reps=300, seed=5, threads=1)
        b = quantile_lmax_mle(np.eye(4), 10, reps=300, seed=5, threads=3)
        assert a == b

    def test_errors(self):
        with pytest.raises(InvalidInput):
            quantile_lmax_mle(np.eye(2), 10, reps=50)
        with pytest.raises(InvalidInput):
            quantile_lmax_mle(np.eye(2), 10, prob=1.0)
