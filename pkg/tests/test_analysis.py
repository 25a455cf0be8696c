"""
Tests for the river analysis pipeline and its configuration.
"""

import shutil
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from src.config import AnalysisConfig
from src.data.panel import PanelDataset
from src.engine.analysis import PairResult, build_suite, interpolate_failures, prepare_panel, resolve_target
from src.errors import SchemaError, SpecError
from src.gmethods.base import EstimateReport


def _create_pairs(values):
    """One gee report per pair; None marks a failed estimate."""
    pairs = []
    for k, value in enumerate(values):
        report = (EstimateReport.failure("gee", 10, "singular") if value is None
                  else EstimateReport(method="gee", mu_hat=value, m=10))
        pairs.append(PairResult(k, k + 1, 100.0 - 10 * k, 90.0 - 10 * k, 1.0, {"gee": report}))
    return pairs


def _create_panel(m=4, n_s=4, months=(5, 6, 7)):
    rng = np.random.default_rng(0)
    shape = (m, n_s, len(months))
    values = {name: rng.uniform(0.5, 2.0, size=shape) for name in ("y", "no3", "p", "temp", "flow")}
    return PanelDataset(
        years=tuple(range(2001, 2001 + m)),
        locations=tuple(float(10 * (n_s - k)) for k in range(n_s)),
        months=months,
        values=values,
    )


class TestAnalysisConfig(unittest.TestCase):
    """Tests for AnalysisConfig."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_space_covariate_defaults(self):
        self.assertEqual(AnalysisConfig(nutrient="no3").resolved_space_covariate, "p")
        self.assertEqual(AnalysisConfig(nutrient="p").resolved_space_covariate, "nh3")
        self.assertEqual(AnalysisConfig(nutrient="no3", space_covariate="tkn").resolved_space_covariate, "tkn")

    def test_validation(self):
        with self.assertRaises(ValueError):
            AnalysisConfig(quantile=0.4)
        with self.assertRaises(ValueError):
            AnalysisConfig(nutrient="no3", space_covariate="no3")
        with self.assertRaises(ValueError):
            AnalysisConfig(other_covariates=["temp"], interaction=True)
        with self.assertRaises(ValueError):
            AnalysisConfig(dist="cauchy")
        AnalysisConfig(quantile=0.4, cutpoint=1.2)

    def test_schema_columns(self):
        schema = AnalysisConfig(nutrient="no3").schema()
        self.assertEqual(schema.covariates, ("nh3", "no3", "tkn", "p", "temp", "flow"))
        self.assertEqual(schema.outcome_transform, "log2")

    def test_yaml_round_trip(self):
        path = Path(self.temp_dir) / "analysis.yaml"
        config = AnalysisConfig(nutrient="tkn", quantile=0.75, probe_months=[4, 5, 6], methods=["gee"])
        config.to_yaml(path)
        self.assertEqual(AnalysisConfig.from_yaml(path), config)


class TestPipelineHelpers(unittest.TestCase):
    """Tests for prepare_panel, resolve_target and build_suite."""

    def test_prepare_drops_unimputable_years(self):
        panel = _create_panel()
        p = np.array(panel.variable("p"), copy=True)
        p[2] = np.nan
        prepared, log, excluded = prepare_panel(panel.with_values(p=p), AnalysisConfig(nutrient="no3"))
        self.assertEqual(excluded, (2003,))
        self.assertEqual(prepared.years, (2001, 2002, 2004))
        self.assertEqual(len(log.unfilled), 4 * 3)

    def test_prepare_ignores_cells_below_target(self):
        """An unimputable gap downstream of the target leaves the year in."""
        panel = _create_panel()
        p = np.array(panel.variable("p"), copy=True)
        p[2, 3, :] = np.nan
        gapped = panel.with_values(p=p)
        config = AnalysisConfig(nutrient="no3")

        prepared, log, excluded = prepare_panel(gapped, config, target=2)
        self.assertEqual(excluded, ())
        self.assertEqual(prepared.years, panel.years)
        self.assertEqual(len(log.unfilled), 3)

        _, _, excluded = prepare_panel(gapped, config, target=3)
        self.assertEqual(excluded, (2003,))

    def test_prepare_requires_variables(self):
        panel = _create_panel()
        with self.assertRaises(SchemaError):
            prepare_panel(panel, AnalysisConfig(nutrient="no3", space_covariate="tkn"))

    def test_target_needs_two_upstream_sites(self):
        panel = _create_panel()
        self.assertEqual(resolve_target(panel, None), 3)
        self.assertEqual(resolve_target(panel, 20.0), 2)
        with self.assertRaises(SpecError):
            resolve_target(panel, 30.0)

    def test_suite_follows_config(self):
        suite = build_suite(AnalysisConfig(nutrient="no3", interaction=True))
        self.assertEqual(suite.space_covariate, "p")
        self.assertIn("temp[s-1,t]:flow[s-1,t]", suite.outcome.term_names)
        override = build_suite(AnalysisConfig(models={
            "structural": {"family": "gaussian", "response": "y", "terms": ["a[s-1,t]", "a[s-2,t]"], "location": 2},
        }))
        self.assertEqual(override.structural.intercept, "single")


class TestInterpolateFailures(unittest.TestCase):
    """Tests for interpolate_failures."""

    def test_mean_of_neighbours(self):
        pairs = _create_pairs([1.0, None, 3.0, None])
        self.assertEqual(interpolate_failures(pairs, ["gee"]), 1)
        filled = pairs[1].reports["gee"]
        self.assertFalse(filled.failed)
        self.assertAlmostEqual(filled.mu_hat, 2.0)
        self.assertTrue(filled.metadata["interpolated"])
        self.assertFalse(filled.significant())
        self.assertTrue(pairs[3].reports["gee"].failed)

    def test_uses_original_estimates_only(self):
        pairs = _create_pairs([None, None, 2.0, 5.0])
        self.assertEqual(interpolate_failures(pairs, ["gee"]), 1)
        self.assertTrue(pairs[0].reports["gee"].failed)
        self.assertAlmostEqual(pairs[1].reports["gee"].mu_hat, 2.0)


if __name__ == '__main__':
    unittest.main(verbosity=2)
