"""
Tests for model specifications, design construction and GLM fitting.
"""

import sys
import unittest
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import statsmodels.api as sm

from src.data.generator import DgpConfig, simulate_dataset
from src.data.panel import PanelDataset
from src.errors import ConvergenceError, EmptyDataError, MissingDataError, SingularDesignError, SpecError
from src.models.design import build_design, complete_rows
from src.models.glm import fit_gee, fit_linear, fit_logistic, predict
from src.models.spec import ModelSpec, TermSpec


def _create_panel(m: int = 40, seed: int = 0) -> PanelDataset:
    """Two locations, months 0..3 (0 = baseline); y at location 1 depends on x there and x upstream."""
    rng = np.random.default_rng(seed)
    shape = (m, 2, 4)
    x = rng.normal(size=shape)
    y = 1.0 + 2.0 * x - 0.5 * np.roll(x, 1, axis=1) + rng.normal(scale=0.5, size=shape)
    b = (rng.random(shape) < 1.0 / (1.0 + np.exp(-(0.3 + 1.2 * x)))).astype(float)
    return PanelDataset(
        years=tuple(range(m)), locations=(20.0, 10.0), months=(0, 1, 2, 3),
        values={"y": y, "x": x, "x2": 2.0 * x, "b": b}, baseline=True,
    )


class TestTermSpec(unittest.TestCase):
    """Tests for TermSpec parsing and validation."""

    def test_parse_compact_forms(self):
        self.assertEqual(TermSpec.parse("a[s-1,t]"), TermSpec("a", -1, 0))
        self.assertEqual(TermSpec.parse("y[s,t-1]"), TermSpec("y", 0, -1))
        term = TermSpec.parse("temp:flow")
        self.assertEqual(term.factors, (TermSpec("temp"), TermSpec("flow")))
        self.assertEqual(term.name, "temp:flow")

    def test_invalid_offsets(self):
        with self.assertRaises(SpecError):
            TermSpec("a", 1, 0)
        with self.assertRaises(SpecError):
            TermSpec("a", 0, -2)
        with self.assertRaises(SpecError):
            TermSpec.parse("a:b:c")

    def test_model_round_trip_through_dict(self):
        spec = ModelSpec("gaussian", "y", ("x", "x[s-1,t]", "y[s,t-1]"), intercept="per_month", location=1)
        self.assertEqual(ModelSpec.from_dict(spec.to_dict()), spec)

    def test_duplicate_terms(self):
        with self.assertRaises(SpecError):
            ModelSpec("gaussian", "y", ("x", "x"))


class TestDesign(unittest.TestCase):
    """Tests for build_design."""

    def setUp(self):
        self.panel = _create_panel()

    def test_lagged_rows_dropped_at_first_month(self):
        """Analysis months exclude the baseline, so lags are defined everywhere."""
        spec = ModelSpec("gaussian", "y", ("x", "y[s,t-1]"), location=1)
        design = build_design(self.panel, spec)
        self.assertEqual(design.n, 40 * 3)
        self.assertEqual(design.names, ("Intercept", "x", "y[s,t-1]"))
        np.testing.assert_array_equal(design.X[:, 2], self.panel.variable("y")[design.clusters, 1, design.times - 1])

    def test_lag_before_grid(self):
        """Including the baseline month, its lag is off the grid and the row drops."""
        spec = ModelSpec("gaussian", "y", ("y[s,t-1]",), location=1, months=(0, 1, 2, 3))
        self.assertEqual(build_design(self.panel, spec).n, 40 * 3)

    def test_per_month_intercepts(self):
        spec = ModelSpec("gaussian", "y", ("x",), intercept="per_month", location=1)
        design = build_design(self.panel, spec)
        self.assertEqual(design.names[:3], ("Intercept[t=1]", "Intercept[t=2]", "Intercept[t=3]"))
        np.testing.assert_array_equal(design.X[:, :3].sum(axis=1), np.ones(design.n))

    def test_upstream_offset_outside_grid(self):
        spec = ModelSpec("gaussian", "y", ("x[s-1,t]",), location=0)
        with self.assertRaises(SpecError):
            build_design(self.panel, spec)

    def test_interaction_override_recomputed(self):
        spec = ModelSpec("gaussian", "y", ("x", "x:x[s-1,t]"), location=1)
        design = build_design(self.panel, spec)
        X = design.with_overrides({"x": 0.0})
        np.testing.assert_array_equal(X[:, 1], np.zeros(design.n))
        np.testing.assert_array_equal(X[:, 2], np.zeros(design.n))

    def test_missing_rows(self):
        y = np.array(self.panel.variable("y"), copy=True)
        y[0, 1, 1] = np.nan
        panel = self.panel.with_values(y=y)
        spec = ModelSpec("gaussian", "y", ("x",), location=1)
        self.assertEqual(build_design(panel, spec).n, 40 * 3 - 1)
        self.assertFalse(complete_rows(panel, [spec])[0, 1])

        x = np.array(self.panel.variable("x"), copy=True)
        x[2, 1, 3] = np.nan
        with self.assertRaises(MissingDataError):
            build_design(self.panel.with_values(x=x), spec, for_prediction=True)

    def test_no_rows(self):
        spec = ModelSpec("gaussian", "y", ("x",), location=1)
        with self.assertRaises(EmptyDataError):
            build_design(self.panel, spec, rows=np.zeros((40, 4), dtype=bool))


class TestFitLinear(unittest.TestCase):
    """Tests for fit_linear and predict."""

    def setUp(self):
        self.panel = _create_panel()
        self.spec = ModelSpec("gaussian", "y", ("x", "x[s-1,t]"), location=1)

    def test_matches_least_squares(self):
        fit = fit_linear(self.panel, self.spec)
        beta, *_ = np.linalg.lstsq(fit.design.X, fit.design.y, rcond=None)
        np.testing.assert_allclose(fit.params, beta, atol=1e-8)
        resid = fit.design.y - fit.design.X @ beta
        self.assertAlmostEqual(fit.dispersion, float(np.mean(resid ** 2)))
        self.assertAlmostEqual(fit.coef("x"), 2.0, delta=0.2)

    def test_scores_vanish_at_fit(self):
        fit = fit_linear(self.panel, self.spec)
        np.testing.assert_allclose(fit.scores.sum(axis=0), 0.0, atol=1e-8)
        self.assertEqual(fit.scores.shape, (40, 4))

    def test_collinear_terms(self):
        spec = ModelSpec("gaussian", "y", ("x", "x2"), location=1)
        with self.assertRaises(SingularDesignError) as ctx:
            fit_linear(self.panel, spec)
        self.assertEqual(len(ctx.exception.terms), 1)

    def test_predict_with_override(self):
        fit = fit_linear(self.panel, self.spec)
        grid = predict(fit, self.panel, overrides={"x": 0.0, "x[s-1,t]": 0.0})
        values = grid[~np.isnan(grid)]
        self.assertEqual(values.size, 40 * 3)
        np.testing.assert_allclose(values, fit.params[0])

    def test_predict_rejects_other_structure(self):
        fit = fit_linear(self.panel, self.spec)
        with self.assertRaises(SpecError):
            predict(fit, self.panel, spec=self.spec.without("x"))

    def test_wrong_family(self):
        with self.assertRaises(SpecError):
            fit_linear(self.panel, ModelSpec("binomial", "b", ("x",), location=1))


class TestFitLogistic(unittest.TestCase):
    """Tests for fit_logistic."""

    def setUp(self):
        self.panel = _create_panel(m=200, seed=4)

    def test_converges_and_scores_vanish(self):
        fit = fit_logistic(self.panel, ModelSpec("binomial", "b", ("x",), location=1))
        self.assertTrue(fit.converged)
        np.testing.assert_allclose(fit.scores.sum(axis=0), 0.0, atol=1e-6)
        self.assertAlmostEqual(fit.coef("x"), 1.2, delta=0.4)
        self.assertGreaterEqual(len(fit.log_likelihood_trace), 1)

    def test_non_binary_response(self):
        with self.assertRaises(SpecError):
            fit_logistic(self.panel, ModelSpec("binomial", "x", ("y",), location=1))

    def test_separation(self):
        x = np.array(self.panel.variable("x"), copy=True)
        b = (x > 0).astype(float)
        panel = self.panel.with_values(b=b)
        with self.assertRaises(ConvergenceError):
            fit_logistic(panel, ModelSpec("binomial", "b", ("x",), location=1))


class TestFitGee(unittest.TestCase):
    """Tests for fit_gee."""

    def test_independence_gee_is_weighted_least_squares(self):
        panel = _create_panel(seed=2)
        spec = ModelSpec("gaussian", "y", ("x",), location=1)
        weights = np.random.default_rng(5).uniform(0.5, 2.0, size=(40, 4))
        fit = fit_gee(panel, spec, weights=weights)
        w = fit.design.weights
        X, y = fit.design.X, fit.design.y
        beta = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * y))
        np.testing.assert_allclose(fit.params, beta, atol=1e-6)
        np.testing.assert_allclose(fit.scores.sum(axis=0), 0.0, atol=1e-6)


class TestFitProperties(unittest.TestCase):
    """Weighting, rescaling and degenerate-model identities."""

    def setUp(self):
        self.panel = _create_panel(m=200, seed=6)

    def test_unit_weights_change_nothing(self):
        ones = np.ones((self.panel.m, self.panel.n_months))
        linear = ModelSpec("gaussian", "y", ("x", "x[s-1,t]"), location=1)
        plain, weighted = fit_linear(self.panel, linear), fit_linear(self.panel, linear, weights=ones)
        np.testing.assert_allclose(weighted.params, plain.params, rtol=0.0, atol=1e-12)
        self.assertAlmostEqual(weighted.dispersion, plain.dispersion, delta=1e-12)

        logistic = ModelSpec("binomial", "b", ("x",), location=1)
        plain, weighted = fit_logistic(self.panel, logistic), fit_logistic(self.panel, logistic, weights=ones)
        np.testing.assert_allclose(weighted.params, plain.params, rtol=0.0, atol=1e-12)

    def test_affine_rescaling(self):
        """x -> 3x + 1 divides its slope by 3 and leaves fitted values alone."""
        spec = ModelSpec("gaussian", "y", ("x",), location=1)
        fit = fit_linear(self.panel, spec)
        rescaled = fit_linear(self.panel.with_values(x=3.0 * self.panel.variable("x") + 1.0), spec)
        self.assertAlmostEqual(rescaled.coef("x"), fit.coef("x") / 3.0, delta=1e-10)
        np.testing.assert_allclose(rescaled.linear_predictor(), fit.linear_predictor(), rtol=0.0, atol=1e-10)

    def test_intercept_only_fits_mean(self):
        fit = fit_linear(self.panel, ModelSpec("gaussian", "y", location=1))
        self.assertEqual(fit.names, ("Intercept",))
        self.assertAlmostEqual(fit.params[0], float(np.mean(fit.design.y)), delta=1e-12)
        self.assertAlmostEqual(fit.dispersion, float(np.var(fit.design.y)), delta=1e-10)

    def test_zero_logistic_coefficients_predict_half(self):
        fit = fit_logistic(self.panel, ModelSpec("binomial", "b", ("x",), location=1))
        grid = predict(replace(fit, params=np.zeros_like(fit.params)), self.panel)
        values = grid[~np.isnan(grid)]
        self.assertEqual(values.size, 200 * 3)
        np.testing.assert_array_equal(values, 0.5)


class TestStructuralEquationRecovery(unittest.TestCase):
    """Correctly specified models recover the simulator's coefficients on 5000 years."""

    @classmethod
    def setUpClass(cls):
        cls.panel = simulate_dataset(DgpConfig(), 5000, 17)
        cls.config = DgpConfig()

    def _assert_recovered(self, fit, expected, bse, tolerance):
        for name, value in expected.items():
            j = fit.design.column(name)
            bound = max(tolerance, 4.0 * bse[j])
            self.assertAlmostEqual(fit.params[j], value, delta=bound, msg=name)

    def test_outcome_equation(self):
        c = self.config
        spec = ModelSpec(
            "gaussian", "y", ("a[s-1,t]", "a[s-2,t]", "L1[s-1,t]", "L2[s-1,t]", "y[s,t-1]"), location=2,
        )
        fit = fit_linear(self.panel, spec)
        bse = sm.OLS(fit.design.y, fit.design.X).fit().bse
        expected = {
            "Intercept": c.y_intercept, "a[s-1,t]": c.y_a2, "a[s-2,t]": c.y_a1,
            "L1[s-1,t]": c.y_l12, "L2[s-1,t]": c.y_l22, "y[s,t-1]": c.y_lag,
        }
        self._assert_recovered(fit, expected, bse, 0.05)
        self.assertAlmostEqual(fit.dispersion, c.y_sd ** 2, delta=0.05)

    def test_upstream_exposure_equation(self):
        c = self.config
        fit = fit_logistic(self.panel, ModelSpec("binomial", "a", ("L1", "a[s,t-1]"), location=0))
        bse = sm.Logit(fit.design.y, fit.design.X).fit(disp=0).bse
        expected = {"Intercept": c.a1_intercept, "L1": c.a1_l11, "a[s,t-1]": c.a1_lag}
        self._assert_recovered(fit, expected, bse, 0.1)

    def test_irls_log_likelihood_non_decreasing(self):
        specs = (
            ModelSpec("binomial", "a", ("L1", "a[s,t-1]"), location=0),
            ModelSpec("binomial", "a", ("L1", "L2", "a[s-1,t]", "a[s,t-1]"), location=1),
        )
        for spec in specs:
            trace = np.array(fit_logistic(self.panel, spec).log_likelihood_trace)
            self.assertGreaterEqual(trace.size, 2, msg=spec.response.name)
            self.assertTrue(np.all(np.diff(trace) >= -1e-9 * np.abs(trace[1:])), msg=str(trace))


if __name__ == '__main__':
    unittest.main(verbosity=2)
