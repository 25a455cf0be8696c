"""
Tests for the structural-equation simulator and its configuration.
"""

import json
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from src.data.generator import (
    SIMULATED_SCHEMA,
    DgpConfig,
    generate_panel_data,
    interventional_mu,
    replicate_seed,
    simulate_dataset,
    true_mu,
)
from src.data.panel import load_csv


class TestDgpConfig(unittest.TestCase):
    """Tests for DgpConfig."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_defaults(self):
        config = DgpConfig()
        self.assertEqual(config.months, (0, 1, 2, 3))
        self.assertEqual(config.locations_km, (30.0, 20.0, 10.0))

    def test_validation(self):
        with self.assertRaises(ValueError):
            DgpConfig(y_sd=0.0)
        with self.assertRaises(ValueError):
            DgpConfig(a_0_prob=1.5)
        with self.assertRaises(ValueError):
            DgpConfig(n_t=0)
        with self.assertRaises(ValueError):
            DgpConfig(locations_km=(10.0, 20.0, 30.0))

    def test_yaml_round_trip(self):
        path = Path(self.temp_dir) / "dgp.yaml"
        DgpConfig(y_a2=2.0, n_t=5).to_yaml(path)
        loaded = DgpConfig.from_yaml(path)
        self.assertEqual(loaded.y_a2, 2.0)
        self.assertEqual(loaded.n_t, 5)
        self.assertEqual(loaded, DgpConfig(y_a2=2.0, n_t=5))

    def test_yaml_ignores_unknown_keys(self):
        path = Path(self.temp_dir) / "dgp.yaml"
        path.write_text("y_a1: 0.0\nnot_a_field: 3\n", encoding="utf-8")
        self.assertEqual(DgpConfig.from_yaml(path).y_a1, 0.0)


class TestSimulateDataset(unittest.TestCase):
    """Tests for simulate_dataset."""

    def test_deterministic(self):
        a = simulate_dataset(DgpConfig(), 20, 7)
        b = simulate_dataset(DgpConfig(), 20, 7)
        c = simulate_dataset(DgpConfig(), 20, 8)
        for name in a.variables:
            np.testing.assert_array_equal(a.variable(name), b.variable(name))
        self.assertFalse(np.allclose(np.nan_to_num(a.variable("y")), np.nan_to_num(c.variable("y"))))

    def test_layout(self):
        panel = simulate_dataset(DgpConfig(), 12, 0)
        self.assertEqual(panel.variable("y").shape, (12, 3, 4))
        self.assertTrue(panel.baseline)
        self.assertEqual(panel.analysis_months, (1, 2, 3))
        self.assertFalse(np.isnan(panel.variable("y")[:, 2]).any())
        self.assertTrue(np.isnan(panel.variable("y")[:, :2]).all())
        self.assertTrue(np.isnan(panel.variable("a")[:, 2]).all())
        self.assertTrue(np.isnan(panel.variable("L2")[:, 0]).all())
        observed = panel.variable("a")[:, :2]
        self.assertTrue(np.all((observed == 0.0) | (observed == 1.0)))

    def test_replicate_streams(self):
        """Replicate seeds differ across replicates and sample sizes."""
        first = simulate_dataset(DgpConfig(), 10, replicate_seed(1, 10, 0))
        again = simulate_dataset(DgpConfig(), 10, replicate_seed(1, 10, 0))
        other = simulate_dataset(DgpConfig(), 10, replicate_seed(1, 10, 1))
        np.testing.assert_array_equal(first.variable("y"), again.variable("y"))
        self.assertFalse(np.array_equal(first.variable("y")[:, 2], other.variable("y")[:, 2]))

    def test_intervention_forces_exposure(self):
        panel = simulate_dataset(DgpConfig(), 10, 0, intervention={1: (1, 0)})
        np.testing.assert_array_equal(panel.variable("a")[:, 0, 1], np.ones(10))
        np.testing.assert_array_equal(panel.variable("a")[:, 1, 1], np.zeros(10))

    def test_invalid_m(self):
        with self.assertRaises(ValueError):
            simulate_dataset(DgpConfig(), 0, 1)


class TestTrueEffect(unittest.TestCase):
    """Tests for the effect implied by the structural equations."""

    def test_default_value(self):
        self.assertAlmostEqual(true_mu(DgpConfig()), 1.65)

    def test_single_location_contrasts(self):
        config = DgpConfig()
        self.assertAlmostEqual(true_mu(config, high=(0, 1)), 1.0)
        self.assertAlmostEqual(true_mu(config, high=(1, 0)), 0.5 + 0.5 * 0.3)

    def test_monte_carlo_agrees(self):
        """Arms share their noise, so the simulated contrast matches the formula."""
        config = DgpConfig()
        self.assertAlmostEqual(interventional_mu(config, n=2000, seed=5), true_mu(config), places=8)
        changed = DgpConfig(l22_a1=1.0, y_l22=0.2)
        self.assertAlmostEqual(interventional_mu(changed, n=2000, seed=5), true_mu(changed), places=8)


class TestGeneratePanelData(unittest.TestCase):
    """Tests for generate_panel_data."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_csv_and_metadata(self):
        output = Path(self.temp_dir) / "sim.csv"
        panel, csv_path, meta_path = generate_panel_data(15, 3, output, verbose=False)
        self.assertTrue(csv_path.exists())
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        self.assertEqual(meta["seed"], 3)
        self.assertEqual(meta["m"], 15)
        self.assertAlmostEqual(meta["true_mu"], 1.65)
        self.assertEqual(meta["generator"], "numpy.random.PCG64")

        reloaded = load_csv(csv_path, SIMULATED_SCHEMA)
        self.assertEqual(reloaded.years, panel.years)
        self.assertTrue(reloaded.baseline)
        np.testing.assert_allclose(reloaded.variable("y"), panel.variable("y"))
        np.testing.assert_array_equal(reloaded.variable("a"), panel.variable("a"))


if __name__ == '__main__':
    unittest.main(verbosity=2)
