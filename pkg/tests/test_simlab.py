import numpy as np
import pytest
from numpy.testing import assert_allclose

from piwcov.exceptions import DimensionError, InvalidInput
from piwcov.simlab import (
    PN_GRID,
    EstimatorSpec,
    Scenario,
    analytic_risk_linear,
    calibrate_sigma2,
    mc_risk,
    mc_risks,
    quadratic_loss,
    reproduce_tables,
    spiked_diagonal,
)

from conftest import random_orthonormal, random_spd


def mle_risk_diagonal_oracle(d, n):
    # independent scalar form for diagonal Sigma: tr(Sigma^2)/n + (n-1)(tr Sigma)^2/n^2
    return np.sum(d * d) / n + (n - 1) * np.sum(d) ** 2 / n**2


class TestLoss:
    def test_zero_and_identity(self):
        assert quadratic_loss(np.eye(3), np.eye(3)) == 0.0
        assert quadratic_loss(np.eye(2), np.zeros((2, 2))) == 2.0

    def test_elementwise_oracle(self, rng):
        a, b = rng.standard_normal((2, 5, 5))
        expect = sum((a[i, j] - b[i, j]) ** 2 for i in range(5) for j in range(5))
        assert quadratic_loss(a, b) == pytest.approx(expect, rel=1e-12)

    def test_dimension(self):
        with pytest.raises(DimensionError):
            quadratic_loss(np.eye(2), np.eye(3))


class TestAnalyticRisk:
    @pytest.mark.parametrize(
        "p,n,expect",
        [(10, 5, 18), (10, 10, 10), (10, 20, 5.25), (50, 25, 98), (50, 50, 50), (50, 100, 25.25),
         (100, 50, 198), (100, 100, 100), (100, 200, 50.25)],
    )
    def test_mle_identity(self, p, n, expect):
        assert analytic_risk_linear(np.eye(p), n, 1.0, 0.0) == pytest.approx(expect, rel=1e-12)

    def test_zero_estimator(self, rng):
        s = random_spd(rng, 4)
        assert analytic_risk_linear(s, 7, 0.0, 0.0) == pytest.approx(np.sum(s * s))

    def test_mle_diagonal_oracle(self, rng):
        d = rng.uniform(0.1, 3, 8)
        assert analytic_risk_linear(np.diag(d), 6, 1.0, 0.0) == pytest.approx(mle_risk_diagonal_oracle(d, 6))

    @pytest.mark.parametrize("p,n", PN_GRID)
    def test_convex_in_ab(self, p, n):
        for scen in (Scenario.identity(p, n), Scenario.spiked(p, n)):
            s = scen.sigma_true.entries
            tr, tr2 = np.trace(s), np.sum(s * s)
            x = (n - 1) / n * tr2 + (n - 1) / n**2 * tr**2
            hess = np.array([[2 * x, 2 * (n - 1) / n * tr], [2 * (n - 1) / n * tr, 2 * p]])
            assert np.all(np.linalg.eigvalsh(hess) > 0)
            # the formula is a quadratic with exactly this Hessian
            f = lambda a, b: analytic_risk_linear(s, n, a, b)  # noqa: E731
            h = 0.5
            faa = (f(1 + h, 0) - 2 * f(1, 0) + f(1 - h, 0)) / h**2
            fbb = (f(1, h) - 2 * f(1, 0) + f(1, -h)) / h**2
            assert faa == pytest.approx(hess[0, 0], rel=1e-8)
            assert fbb == pytest.approx(hess[1, 1], rel=1e-8)

    def test_needs_two(self):
        with pytest.raises(InvalidInput):
            analytic_risk_linear(np.eye(2), 1, 1.0, 0.0)


class TestCalibration:
    def test_forward_check(self):
        scen = Scenario.spiked(50, 50)
        assert analytic_risk_linear(scen.sigma_true, 50, 1.0, 0.0) == pytest.approx(50.0, rel=1e-9)

    @pytest.mark.parametrize("p,n", PN_GRID)
    def test_all_cells(self, p, n):
        scen = Scenario.spiked(p, n)
        risk_i = analytic_risk_linear(np.eye(p), n, 1.0, 0.0)
        assert analytic_risk_linear(scen.sigma_true, n, 1.0, 0.0) == pytest.approx(risk_i, rel=1e-9)
        assert abs(np.mean(np.diag(scen.sigma_true.entries)) - 1.0) < 0.01

    def test_quartic_scaling(self):
        d = spiked_diagonal(20, 1.0)
        r1 = analytic_risk_linear(np.diag(d), 15, 1.0, 0.0)
        r2 = analytic_risk_linear(np.diag(2.0 * d), 15, 1.0, 0.0)
        assert r2 == pytest.approx(4.0 * r1)
        # sigma2 scales the matrix, so the risk scales with sigma2 squared
        assert calibrate_sigma2(20, 15) ** 2 * r1 == pytest.approx(analytic_risk_linear(np.eye(20), 15, 1, 0))

    def test_spectrum_shape(self):
        d = spiked_diagonal(20)
        assert_allclose(d[:2], [1.0, 2**-0.7])
        assert_allclose(d[2:], 2.0**-0.6 * np.arange(3, 21) ** -0.1)

    def test_p_multiple_of_ten(self):
        with pytest.raises(InvalidInput):
            calibrate_sigma2(15, 10)

    def test_identity_has_no_sigma2(self):
        assert Scenario.identity(10, 5).sigma2 is None


class TestMonteCarlo:
    def test_mle_matches_table_one(self):
        rep = mc_risk(Scenario.identity(10, 20), EstimatorSpec.mle(), reps=5000, seed=11)
        assert abs(rep.risk_mc - 5.25) <= 3 * rep.mc_stderr
        assert rep.risk_analytic == pytest.approx(5.25)

    def test_stderr_definition(self):
        scen = Scenario.identity(10, 10)
        rep = mc_risk(scen, EstimatorSpec.linear(0.5, 0.4), reps=200, seed=2)
        assert rep.mc_stderr > 0 and rep.reps == 200

    def test_thread_independence(self):
        scen = Scenario.spiked(10, 5)
        specs = [EstimatorSpec.mle(), EstimatorSpec.piw(2, 1.0, 0.8), EstimatorSpec.piw(3, 0.8, 0.9)]
        one = mc_risks(scen, specs, reps=300, seed=9, threads=1)
        many = mc_risks(scen, specs, reps=300, seed=9, threads=4)
        for a, b in zip(one, many):
            assert a.risk_mc == b.risk_mc and a.mc_stderr == b.mc_stderr

    def test_seed_changes_result(self):
        scen = Scenario.identity(10, 5)
        a = mc_risk(scen, EstimatorSpec.mle(), reps=200, seed=1).risk_mc
        b = mc_risk(scen, EstimatorSpec.mle(), reps=200, seed=2).risk_mc
        assert a != b

    def test_rotation_invariance(self, rng):
        scen = Scenario.spiked(10, 10)
        v = random_orthonormal(rng, 10)
        for spec in (EstimatorSpec.piw(2, 1.0, 0.9), EstimatorSpec.linear(0.6, 0.3)):
            base = mc_risk(scen, spec, reps=200, seed=4)
            rot = mc_risk(scen, spec, reps=200, seed=4, rotation=v)
            assert rot.risk_mc == pytest.approx(base.risk_mc, rel=1e-9)

    def test_invalid_estimator(self):
        with pytest.raises(InvalidInput):
            mc_risks(Scenario.identity(10, 5), ["mle"], reps=200)
        with pytest.raises(InvalidInput):
            EstimatorSpec.piw(2, 1.0, 1.5)
        with pytest.raises(InvalidInput):
            mc_risk(Scenario.identity(10, 5), EstimatorSpec.mle(), reps=10)

    def test_report_serialization(self):
        rep = mc_risk(Scenario.identity(10, 5), EstimatorSpec.piw(2, 1.0, 0.8), reps=100)
        d = rep.to_dict()
        assert "mc_stderr" in d and "risk_analytic" not in d
        analytic = reproduce_tables(1, cells=[(10, 5)]).reports[0].to_dict()
        assert "mc_stderr" not in analytic and analytic["risk_analytic"] == 18.0


@pytest.fixture(scope="module")
def table_two_small():
    return reproduce_tables(2, cells=[(10, 5)], reps=2000, seed=0, quantile_reps=2000)


class TestTables:
    def test_table_one_column(self):
        res = reproduce_tables(1)
        layout = res.layout()
        assert [float(r[1]) for r in layout[1:]] == [18.0, 10.0, 5.25]
        assert [float(r[3]) for r in layout[1:]] == [198.0, 100.0, 50.25]

    def test_cell_filter(self):
        with pytest.raises(InvalidInput):
            reproduce_tables(2, cells=[(10, 7)])
        with pytest.raises(InvalidInput):
            reproduce_tables(4)

    def test_spot_cell_10_5(self, table_two_small):
        rep = table_two_small.find(10, 5, 2, 1.0, 0.8)
        assert abs(rep.risk_mc - 0.07) <= 0.02

    def test_bold_pattern_10_5(self, table_two_small):
        for sf in (1.0, 0.9, 0.8):
            q2 = table_two_small.find(10, 5, 2, 1.0, sf).risk_mc
            for floor in (0.8, 1.0, 1.2):
                assert q2 < table_two_small.find(10, 5, 1, floor, sf).risk_mc

    def test_linear_rows_match_analytic(self, table_two_small):
        lin = [r for r in table_two_small.reports if r.estimator.is_linear]
        assert len(lin) == 9
        ok = [abs(r.risk_mc - r.risk_analytic) <= 4 * r.mc_stderr for r in lin]
        assert np.mean(ok) >= 0.95

    def test_layout_and_matching(self, table_two_small):
        layout = table_two_small.layout()
        assert layout[1][:2] == ["(10,5)", "q=1"] and layout[2][:2] == ["(10,5)", "q=2"]
        info = table_two_small.matching["(10,5)"]
        assert info["L"] > 0 and len(info["matched"]) == 9

    def test_deterministic(self, table_two_small):
        again = reproduce_tables(2, cells=[(10, 5)], reps=2000, seed=0, quantile_reps=2000)
        assert [r.risk_mc for r in again.reports] == [r.risk_mc for r in table_two_small.reports]
