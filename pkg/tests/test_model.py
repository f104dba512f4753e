"""GLS regression, log-likelihood and its lambda-score.

Oracles: a dense multivariate-normal log-density for the likelihood, a
weighted-least-squares reference fit for GLS, and central differences of
the likelihood for the score.
"""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from dpfh.exceptions import DataError
from dpfh.model import AreaData, ModelParams, gls_beta, log_likelihood, score_lambda
from dpfh.transforms import DualPowerTransform, LogTransform


def dataset_from_h(h, x, d, lam=0.6):
    """Build a dataset whose transformed values are exactly ``h``."""
    t = DualPowerTransform(lam)
    return AreaData(t.inverse(np.asarray(h, float)), x, d), t


class TestAreaData:
    def test_rejects_non_positive_y(self):
        with pytest.raises(DataError):
            AreaData([1.0, -2.0, 3.0], np.ones((3, 1)), [1.0, 1.0, 1.0])

    def test_rejects_non_positive_d(self):
        with pytest.raises(DataError):
            AreaData([1.0, 2.0, 3.0], np.ones((3, 1)), [1.0, 0.0, 1.0])

    def test_rejects_m_not_larger_than_p(self):
        with pytest.raises(DataError):
            AreaData([1.0, 2.0], np.ones((2, 2)), [1.0, 1.0])

    def test_rejects_rank_deficiency_naming_columns(self):
        x = np.ones((5, 3))
        x[:, 1] = np.arange(5.0)
        x[:, 2] = 2.0 * np.arange(5.0)  # duplicate of column 1
        with pytest.raises(DataError, match=r"column"):
            AreaData(np.ones(5), x, np.ones(5))

    def test_spread_diagnostic_and_immutability(self):
        data = AreaData([1.0, 2.0, 3.0], np.ones((3, 1)), [0.1, 0.2, 0.5])
        assert data.sampling_var_spread == pytest.approx(5.0)
        with pytest.raises(ValueError):
            data.y[0] = 9.0

    def test_with_y_keeps_design(self):
        data = AreaData([1.0, 2.0, 3.0], np.ones((3, 1)), [0.1, 0.2, 0.5])
        new = data.with_y([4.0, 5.0, 6.0])
        assert new.x is not data.x or np.array_equal(new.x, data.x)
        np.testing.assert_array_equal(new.sampling_var, data.sampling_var)


class TestGlsBeta:
    def test_equal_weights_give_plain_mean(self):
        h = np.array([0.3, -1.2, 2.0, 0.7])
        data, t = dataset_from_h(h, np.ones((4, 1)), np.full(4, 0.7))
        for a in (0.0, 0.5, 3.0):
            assert gls_beta(data, a, t)[0] == pytest.approx(h.mean(), rel=1e-12)

    def test_equal_d_reduces_to_ols_for_any_a(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([np.ones(12), rng.standard_normal(12)])
        h = rng.standard_normal(12)
        data, t = dataset_from_h(h, x, np.full(12, 0.4))
        ols = np.linalg.lstsq(x, h, rcond=None)[0]
        for a in (0.0, 1.3):
            np.testing.assert_allclose(gls_beta(data, a, t), ols, rtol=1e-10)

    def test_hand_computed_weighted_mean(self):
        # weights 1/(A+D) = (1/2, 1/2, 1/3) on h = (1, 2, 6)
        data, t = dataset_from_h([1.0, 2.0, 6.0], np.ones((3, 1)), [1.0, 1.0, 2.0])
        got = gls_beta(data, 1.0, t)[0]
        assert got == pytest.approx(2.625, rel=1e-12)
        # independent weighted-least-squares oracle
        w = 1.0 / (1.0 + np.array([1.0, 1.0, 2.0]))
        ref = np.linalg.lstsq(
            np.sqrt(w)[:, None] * np.ones((3, 1)),
            np.sqrt(w) * np.array([1.0, 2.0, 6.0]),
            rcond=None,
        )[0][0]
        assert got == pytest.approx(ref, rel=1e-12)

    def test_maximizes_likelihood_over_beta(self):
        rng = np.random.default_rng(11)
        x = np.column_stack([np.ones(9), rng.standard_normal(9)])
        h = rng.standard_normal(9) + x @ np.array([0.4, 1.1])
        d = rng.uniform(0.2, 0.9, 9)
        data, t = dataset_from_h(h, x, d)
        a = 0.5
        beta = gls_beta(data, a, t)
        w = 1.0 / (a + d)
        grad = x.T @ (w * (h - x @ beta))
        assert np.max(np.abs(grad)) < 1e-8

    def test_shift_equivariance_intercept_only(self):
        rng = np.random.default_rng(5)
        h = rng.standard_normal(7)
        d = rng.uniform(0.1, 1.0, 7)
        data, t = dataset_from_h(h, np.ones((7, 1)), d)
        shifted, _ = dataset_from_h(h + 2.5, np.ones((7, 1)), d)
        b0 = gls_beta(data, 0.7, t)[0]
        b1 = gls_beta(shifted, 0.7, t)[0]
        assert b1 - b0 == pytest.approx(2.5, rel=1e-10)


class TestLogLikelihood:
    def test_zero_residual_log_model_is_minus_log_y(self):
        # both areas fit exactly, unit total variance: only the Jacobian survives
        y = np.array([2.0, 5.0])
        t = LogTransform()
        h = t.forward(y)
        data = AreaData(y, np.column_stack([h]), np.full(2, 0.6))
        params = ModelParams(np.array([1.0]), 0.4, t)  # x beta = h exactly, A+D = 1
        got = log_likelihood(data, params)
        assert got == pytest.approx(-np.log(y).sum(), rel=1e-12)

    def test_doubling_residuals_quadruples_quadratic_term(self):
        rng = np.random.default_rng(2)
        x = np.ones((6, 1))
        d = np.full(6, 0.5)
        beta = np.array([0.3])
        h1 = 0.3 + rng.standard_normal(6)
        h2 = 0.3 + 2.0 * (h1 - 0.3)
        data1, t = dataset_from_h(h1, x, d)
        data2, _ = dataset_from_h(h2, x, d)
        params = ModelParams(beta, 0.5, t)
        # A + D = 1 kills the log-determinant term; removing the Jacobian
        # isolates the quadratic form
        jac1 = np.log(t.derivatives(data1.y).h_y).sum()
        jac2 = np.log(t.derivatives(data2.y).h_y).sum()
        quad1 = log_likelihood(data1, params) - jac1
        quad2 = log_likelihood(data2, params) - jac2
        assert quad2 == pytest.approx(4.0 * quad1, rel=1e-10)

    def test_against_dense_normal_density_oracle(self):
        rng = np.random.default_rng(8)
        x = np.column_stack([np.ones(3), np.array([0.5, -1.0, 2.0])])
        h = np.array([0.2, -0.4, 1.5])
        d = np.array([0.3, 0.7, 1.1])
        data, t = dataset_from_h(h, x, d, lam=0.9)
        params = ModelParams(np.array([0.1, 0.6]), 0.8, t)
        oracle = (
            multivariate_normal.logpdf(h, mean=x @ params.beta, cov=np.diag(0.8 + d))
            + 0.5 * 3 * np.log(2 * np.pi)  # our likelihood drops the constant
            + np.log(t.derivatives(data.y).h_y).sum()
        )
        assert log_likelihood(data, params) == pytest.approx(oracle, abs=1e-10)


class TestScoreLambda:
    def test_zero_at_unit_observations(self):
        data = AreaData(np.ones(4), np.column_stack([np.ones(4), [1, -1, 2, 0]]), np.full(4, 0.3))
        for a in (0.0, 0.7):
            params = ModelParams(np.zeros(2), a, DualPowerTransform(0.6))
            assert score_lambda(data, params) == 0.0

    def test_log_transform_unsupported(self):
        data = AreaData([1.0, 2.0, 3.0], np.ones((3, 1)), np.full(3, 0.3))
        with pytest.raises(ValueError):
            score_lambda(data, ModelParams(np.array([0.0]), 0.4, LogTransform()))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_likelihood_derivative(self, seed):
        rng = np.random.default_rng(seed)
        m = 8
        x = np.column_stack([np.ones(m), rng.standard_normal(m)])
        d = rng.uniform(0.1, 0.8, m)
        y = rng.lognormal(0.2, 0.7, m)
        data = AreaData(y, x, d)
        beta = rng.standard_normal(2)
        a = rng.uniform(0.1, 1.0)
        lam = rng.uniform(0.2, 1.5)
        got = score_lambda(data, ModelParams(beta, a, DualPowerTransform(lam)))
        dl = 1e-6 * lam
        plus = log_likelihood(data, ModelParams(beta, a, DualPowerTransform(lam + dl)))
        minus = log_likelihood(data, ModelParams(beta, a, DualPowerTransform(lam - dl)))
        fd = (plus - minus) / (2 * dl)
        assert got == pytest.approx(fd, rel=1e-6)

    def test_single_area_composition_from_transform_values(self):
        # m=2 to satisfy m > p; the second area sits at y=1 and contributes 0
        t = DualPowerTransform(0.6)
        y = np.array([2.0, 1.0])
        data = AreaData(y, np.ones((2, 1)), np.array([0.6, 0.6]))
        params = ModelParams(np.array([0.0]), 0.4, t)  # A + D = 1
        der = t.derivatives(2.0)
        expected = der.h_y_lambda / der.h_y - der.h * der.h_lambda
        assert score_lambda(data, params) == pytest.approx(expected, rel=1e-12)
