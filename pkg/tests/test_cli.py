"""
Tests for the command-line entry point.
"""

import json
import logging
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd

from src.cli import EXIT_INVALID, EXIT_OK, main

LOCATIONS = tuple(float(km) for km in range(120, 0, -10))
NUTRIENTS = ("nh3", "no3", "tkn", "p")


def _create_river_csv(path: Path, years=range(2001, 2016), drop_p_year=None, seed=0) -> Path:
    """Synthetic river: 12 sites, months 4-10, chlorophyll rising with upstream nitrate."""
    rng = np.random.default_rng(seed)
    rows = []
    for year in years:
        for month in range(4, 11):
            no3 = rng.gamma(2.0, 0.5, size=len(LOCATIONS))
            temp = rng.normal(22.0, 3.0)
            flow = rng.lognormal(5.0, 0.5)
            for k, km in enumerate(LOCATIONS):
                upstream = no3[k - 2] if k >= 2 else no3[k]
                rows.append({
                    "year": year,
                    "location_km": km,
                    "month": month,
                    "chla": float(np.exp(1.0 + 0.3 * upstream + rng.normal(0.0, 0.4))),
                    "nh3": float(rng.gamma(2.0, 0.05)),
                    "no3": float(no3[k]),
                    "tkn": float(rng.gamma(3.0, 0.3)),
                    "p": np.nan if year == drop_p_year else float(rng.gamma(2.0, 0.1)),
                    "temp": temp + float(rng.normal(0.0, 0.5)),
                    "flow": flow,
                })
    pd.DataFrame(rows).to_csv(path, index=False, na_rep="NA")
    return path


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        for handler in logging.getLogger().handlers[:]:
            handler.close()
            logging.getLogger().removeHandler(handler)
        shutil.rmtree(self.temp_dir, ignore_errors=True)


class TestSimulateCommand(CliTestCase):
    """Tests for `simulate`."""

    def test_same_seed_same_bytes(self):
        first = self.temp_dir / "a.csv"
        second = self.temp_dir / "b.csv"
        self.assertEqual(main(["simulate", "--m", "12", "--seed", "4", "--output", str(first)]), EXIT_OK)
        self.assertEqual(main(["simulate", "--m", "12", "--seed", "4", "--output", str(second)]), EXIT_OK)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        meta = json.loads((self.temp_dir / "a.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["m"], 12)

    def test_invalid_m(self):
        output = self.temp_dir / "bad.csv"
        self.assertEqual(main(["simulate", "--m", "0", "--output", str(output)]), EXIT_INVALID)
        self.assertFalse(output.exists())


class TestStudyCommand(CliTestCase):
    """Tests for `study`."""

    def test_summary_rows(self):
        output = self.temp_dir / "study.csv"
        code = main(["study", "--m", "10,30", "--reps", "2", "--seed", "5", "--output", str(output)])
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(output)
        self.assertEqual(len(table), 4 * 2 * 8)
        self.assertEqual(sorted(table["method"].unique()), ["gee", "gformula", "msm", "snm"])
        self.assertTrue((self.temp_dir / "study.meta.json").exists())

    def test_variant_filter(self):
        output = self.temp_dir / "study.csv"
        code = main(["study", "--m", "20", "--reps", "1", "--methods", "gee", "--b", "0.3", "--dist", "t",
                     "--output", str(output)])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(pd.read_csv(output)["ci_variant"].tolist(), ["I7"])

    def test_unknown_method(self):
        output = self.temp_dir / "study.csv"
        self.assertEqual(main(["study", "--methods", "gformula,bayes", "--output", str(output)]), EXIT_INVALID)


class TestAnalyzeCommand(CliTestCase):
    """Tests for `analyze`."""

    def test_pairs_and_excluded_year(self):
        data = _create_river_csv(self.temp_dir / "river.csv", drop_p_year=2005)
        output = self.temp_dir / "no3.csv"
        code = main(["analyze", "--input", str(data), "--nutrient", "no3", "--methods", "gee",
                     "--quantile", "0.5", "--output", str(output)])
        self.assertEqual(code, EXIT_OK)

        table = pd.read_csv(output)
        self.assertEqual(len(table), 10)
        self.assertEqual(table["s1_km"].tolist(), list(LOCATIONS[:10]))
        self.assertTrue((table["target_km"] == 10.0).all())
        self.assertTrue((table["m"] == 14).all())
        self.assertIn("significant", table.columns)

        meta = json.loads((self.temp_dir / "no3.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["excluded_years"], [2005])
        self.assertEqual(meta["pairs"], 10)
        self.assertTrue((self.temp_dir / "no3.imputation.csv").exists())
        self.assertTrue((self.temp_dir / "no3.json").exists())

    def test_missing_nutrient_column(self):
        data = self.temp_dir / "river.csv"
        _create_river_csv(data, years=range(2001, 2006))
        pd.read_csv(data).drop(columns=["tkn"]).to_csv(data, index=False)
        output = self.temp_dir / "out.csv"
        self.assertEqual(main(["analyze", "--input", str(data), "--output", str(output)]), EXIT_INVALID)

    def test_missing_input(self):
        output = self.temp_dir / "out.csv"
        code = main(["analyze", "--input", str(self.temp_dir / "absent.csv"), "--output", str(output)])
        self.assertEqual(code, 2)


class TestScreenCommand(CliTestCase):
    """Tests for `screen`."""

    def test_ordered_output(self):
        data = _create_river_csv(self.temp_dir / "river.csv", years=range(2001, 2006))
        output = self.temp_dir / "screen.csv"
        self.assertEqual(main(["screen", "--input", str(data), "--output", str(output)]), EXIT_OK)
        table = pd.read_csv(output)
        self.assertEqual(len(table), 11 * len(NUTRIENTS))
        self.assertTrue(table["location_km"].is_monotonic_decreasing)
        self.assertTrue(table["rho"].between(-1.0, 1.0).all())
        self.assertTrue((self.temp_dir / "screen.meta.json").exists())

    def test_missing_column(self):
        data = self.temp_dir / "river.csv"
        _create_river_csv(data, years=range(2001, 2004))
        pd.read_csv(data).drop(columns=["flow"]).to_csv(data, index=False)
        output = self.temp_dir / "screen.csv"
        self.assertEqual(main(["screen", "--input", str(data), "--output", str(output)]), EXIT_INVALID)


if __name__ == '__main__':
    unittest.main(verbosity=2)
