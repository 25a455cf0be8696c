"""
Tests for the sandwich covariance, the Fay correction and Wald intervals.
"""

import sys
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import statsmodels.api as sm

from src.data.panel import PanelDataset
from src.errors import NegativeVarianceError, SingularBreadError
from src.inference.mestimate import CovarianceReport, EstimatingStack, StackBuilder, fay_correct, sandwich
from src.inference.wald import CI_VARIANTS, DEFAULT_VARIANT, delta_method, intervals, select_variants, wald_ci
from src.models.glm import fit_linear
from src.models.spec import ModelSpec


def _create_mean_stack(values: np.ndarray, analytic: bool = False) -> EstimatingStack:
    """Stack for a scalar mean: g_i(θ) = O_i - θ."""
    values = np.asarray(values, dtype=float)
    return EstimatingStack(
        theta_hat=np.array([values.mean()]),
        contributions=lambda th: (values - th[0])[:, None],
        m=values.size,
        names=("mean",),
        jacobian=(lambda th: -np.ones((values.size, 1, 1))) if analytic else None,
    )


def _create_weighted_means_stack(seed: int = 3) -> EstimatingStack:
    """Two independent weighted means; cluster weights spread the leverages around b."""
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(30, 2))
    weights = rng.uniform(0.2, 3.0, size=(30, 2))
    theta_hat = (weights * values).sum(axis=0) / weights.sum(axis=0)
    return EstimatingStack(
        theta_hat=theta_hat,
        contributions=lambda th: weights * (values - th),
        m=30,
        names=("first", "second"),
    )


class TestSandwich(unittest.TestCase):
    """Tests for sandwich and fay_correct."""

    def setUp(self):
        self.values = np.random.default_rng(1).normal(2.0, 1.5, size=25)
        self.stack = _create_mean_stack(self.values)

    def test_scalar_mean(self):
        """The sandwich of a mean is the plug-in variance over m."""
        report = sandwich(_create_mean_stack(self.values, analytic=True))
        m = self.values.size
        expected = np.sum((self.values - self.values.mean()) ** 2) / m ** 2
        self.assertAlmostEqual(report.sigma_uncorrected[0, 0], expected, delta=1e-12)
        self.assertAlmostEqual(sandwich(self.stack).A_hat[0, 0], -1.0, places=6)

    def test_fay_scales_by_leverage(self):
        """Each cluster's leverage is 1, so the correction caps at b and scales by 1/(1-b)."""
        report = sandwich(_create_mean_stack(self.values, analytic=True))
        for b in (0.1, 0.3, 0.75):
            self.assertAlmostEqual(report.sigma_bc[b][0, 0], report.sigma_uncorrected[0, 0] / (1.0 - b), delta=1e-12)
        self.assertEqual(list(report.variants()), ["uncorrected", "b0.1", "b0.3", "b0.75"])

    def test_fay_monotone_in_b(self):
        """Cluster leverages straddle the cap, and every diagonal still grows with b."""
        report = sandwich(_create_weighted_means_stack())
        leverage = np.einsum("ijk,kj->ij", report.A_i, report.A_inv)
        self.assertTrue((leverage < 0.75).any() and (leverage > 0.75).any())
        diagonals = [np.diag(report.sigma_uncorrected)] + [np.diag(report.sigma_bc[b]) for b in (0.1, 0.3, 0.75)]
        for lower, upper in zip(diagonals, diagonals[1:]):
            self.assertTrue(np.all(upper >= lower), msg=f"{lower} -> {upper}")

    def test_independent_equations_give_diagonal_bread(self):
        report = sandwich(_create_weighted_means_stack())
        self.assertEqual(report.A_hat[0, 1], 0.0)
        self.assertEqual(report.A_hat[1, 0], 0.0)

    def test_fay_b_out_of_range(self):
        report = sandwich(self.stack)
        with self.assertRaises(ValueError):
            fay_correct(report, 1.0)

    def test_singular_bread(self):
        stack = EstimatingStack(
            theta_hat=np.array([0.0]),
            contributions=lambda th: np.ones((5, 1)),
            m=5,
        )
        with self.assertRaises(SingularBreadError):
            sandwich(stack)

    def test_contribution_shape_checked(self):
        with self.assertRaises(ValueError):
            EstimatingStack(theta_hat=np.zeros(2), contributions=lambda th: np.zeros((4, 1)), m=4)

    def test_solution_check(self):
        self.assertTrue(self.stack.check_solution())
        off = EstimatingStack(self.stack.theta_hat + 1.0, self.stack.contributions, self.stack.m)
        with self.assertLogs("src.inference.mestimate", level="WARNING"):
            self.assertFalse(off.check_solution())


class TestStackedLinearModel(unittest.TestCase):
    """A linear fit stacked on its own: analytic and numeric Jacobians agree with cluster-robust OLS."""

    def setUp(self):
        rng = np.random.default_rng(8)
        shape = (30, 1, 5)
        x = rng.normal(size=shape)
        y = 0.5 + 1.5 * x + rng.normal(size=shape) + rng.normal(size=(30, 1, 1))
        panel = PanelDataset(
            years=tuple(range(30)), locations=(10.0,), months=tuple(range(5)), values={"y": y, "x": x},
        )
        self.fit = fit_linear(panel, ModelSpec("gaussian", "y", ("x",), location=0))
        builder = StackBuilder(panel.m)
        builder.add_fit(self.fit, "outcome")
        self.stack = builder.build()

    def test_names_and_solution(self):
        self.assertEqual(self.stack.names, ("outcome:Intercept", "outcome:x", "outcome:sigma2"))
        np.testing.assert_allclose(self.stack.estimating_sums(), 0.0, atol=1e-8)

    def test_analytic_matches_numeric(self):
        analytic = sandwich(self.stack)
        numeric = sandwich(self.stack.numeric())
        np.testing.assert_allclose(analytic.A_hat, numeric.A_hat, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(analytic.sigma_uncorrected, numeric.sigma_uncorrected, rtol=1e-4, atol=1e-8)

    def test_matches_cluster_robust_ols(self):
        design = self.fit.design
        ols = sm.OLS(design.y, design.X).fit(
            cov_type="cluster", cov_kwds={"groups": design.clusters, "use_correction": False},
        )
        report = sandwich(self.stack)
        np.testing.assert_allclose(report.sigma_uncorrected[:2, :2], ols.cov_params(), rtol=1e-6)

    def test_stacked_sub_models_are_block_diagonal(self):
        """A second model sharing no parameters leaves the off-diagonal bread blocks at zero."""
        values = np.random.default_rng(9).normal(size=30)
        builder = StackBuilder(30)
        builder.add_fit(self.fit, "outcome")
        builder.add(np.array([values.mean()]), ["mean"], lambda th: (values - th[3])[:, None])
        report = sandwich(builder.build())
        np.testing.assert_array_equal(report.A_hat[:3, 3], 0.0)
        np.testing.assert_array_equal(report.A_hat[3, :3], 0.0)
        np.testing.assert_allclose(report.sigma_uncorrected[:3, :3], sandwich(self.stack).sigma_uncorrected,
                                   rtol=1e-4, atol=1e-10)


class TestDeltaMethod(unittest.TestCase):
    """Tests for delta_method."""

    def test_square_of_mean(self):
        values = np.random.default_rng(2).normal(3.0, 1.0, size=40)
        report = sandwich(_create_mean_stack(values))
        theta = report.theta_hat[0]
        numeric = delta_method(report, lambda th: th[0] ** 2)
        analytic = delta_method(report, lambda th: th[0] ** 2, gradient=lambda th: np.array([2.0 * th[0]]))
        for label, sigma in report.variants().items():
            self.assertAlmostEqual(analytic[label], 4.0 * theta ** 2 * sigma[0, 0], places=10)
            self.assertAlmostEqual(numeric[label], analytic[label], delta=1e-6 * analytic[label])

    def test_sum_with_identity_covariance(self):
        identity = np.eye(2)
        report = CovarianceReport(
            theta_hat=np.array([0.4, -1.2]), names=("a", "b"), m=10, sigma_uncorrected=identity,
            A_hat=-identity, B_hat=identity, A_i=np.tile(-identity, (10, 1, 1)),
            contributions=np.zeros((10, 2)), A_inv=-identity,
        )
        analytic = delta_method(report, lambda th: th[0] + th[1], gradient=lambda th: np.ones(2))
        numeric = delta_method(report, lambda th: th[0] + th[1])
        self.assertEqual(analytic, {"uncorrected": 2.0})
        self.assertAlmostEqual(numeric["uncorrected"], 2.0, places=8)


class TestWald(unittest.TestCase):
    """Tests for wald_ci, intervals and the variant table."""

    def test_normal_quantile(self):
        ci = wald_ci(1.0, 4.0, level=0.95)
        self.assertAlmostEqual(ci.upper, 1.0 + 1.959964 * 2.0, places=5)
        self.assertAlmostEqual(ci.lower, 1.0 - 1.959964 * 2.0, places=5)
        self.assertAlmostEqual(ci.width, 2 * 1.959964 * 2.0, places=5)

    def test_t_quantile(self):
        ci = wald_ci(0.0, 1.0, level=0.95, dist="t", df=10)
        self.assertAlmostEqual(ci.upper, 2.228139, places=5)
        self.assertEqual(ci.df, 10)

    def test_p_value_and_coverage(self):
        ci = wald_ci(1.959964, 1.0, level=0.95)
        self.assertAlmostEqual(ci.p_value, 0.05, places=5)
        self.assertTrue(ci.covers(1.0))
        self.assertTrue(ci.excludes_zero)

    def test_ninety_percent_quantiles(self):
        self.assertAlmostEqual(wald_ci(0.0, 1.0, level=0.90).upper, 1.6449, places=4)
        ci = wald_ci(0.0, 1.0, level=0.90, dist="t", df=14)
        self.assertAlmostEqual(ci.lower, -1.7613, places=4)
        self.assertAlmostEqual(ci.upper, 1.7613, places=4)

    def test_zero_variance(self):
        ci = wald_ci(2.0, 0.0)
        self.assertEqual((ci.lower, ci.upper), (2.0, 2.0))
        self.assertEqual(ci.p_value, 0.0)
        self.assertEqual(wald_ci(0.0, 0.0, dist="t", df=5).p_value, 1.0)

    def test_invalid_arguments(self):
        with self.assertRaises(NegativeVarianceError):
            wald_ci(0.0, -1.0)
        with self.assertRaises(ValueError):
            wald_ci(0.0, 1.0, level=1.5)
        with self.assertRaises(ValueError):
            wald_ci(0.0, 1.0, dist="t")

    def test_variant_labels(self):
        labels = {v.label: (v.variance, v.dist) for v in CI_VARIANTS}
        self.assertEqual(len(labels), 8)
        self.assertEqual(labels["I1"], ("uncorrected", "normal"))
        self.assertEqual(labels["I4"], ("b0.75", "normal"))
        self.assertEqual(labels["I5"], ("uncorrected", "t"))
        self.assertEqual(labels["I7"], ("b0.3", "t"))
        self.assertEqual(DEFAULT_VARIANT.label, "I7")

    def test_select_variants(self):
        self.assertEqual([v.label for v in select_variants("0.3", "t")], ["I7"])
        self.assertEqual([v.label for v in select_variants(0.1)], ["I2", "I6"])
        self.assertEqual([v.label for v in select_variants("uncorrected", "normal")], ["I1"])
        self.assertEqual(len(select_variants()), 8)
        with self.assertRaises(ValueError):
            select_variants(0.5)
        with self.assertRaises(ValueError):
            select_variants(dist="cauchy")

    def test_intervals_keyed_by_label(self):
        variances = {"uncorrected": 1.0, "b0.1": 1.1, "b0.3": 1.3, "b0.75": 2.0}
        out = intervals(0.5, variances, m=12, level=0.9)
        self.assertEqual(sorted(out), [f"I{k}" for k in range(1, 9)])
        self.assertGreater(out["I5"].width, out["I1"].width)
        self.assertGreater(out["I8"].width, out["I5"].width)
        self.assertEqual(out["I7"].df, 12)


if __name__ == '__main__':
    unittest.main(verbosity=2)
