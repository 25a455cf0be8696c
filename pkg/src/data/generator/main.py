"""
Entry point for writing simulated panels to disk.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.data.panel import CsvSchema, PanelDataset

from .config import DgpConfig
from .generators import GENERATOR, simulate_dataset, true_mu

logger = logging.getLogger(__name__)

# How a simulated CSV is read back.
SIMULATED_SCHEMA = CsvSchema(
    outcome="y",
    outcome_transform="none",
    binary_exposure="a",
    covariates=("L1", "L2"),
    baseline_month=0,
)


def generate_panel_data(
    m: int,
    seed: int,
    output: Union[str, Path],
    config: Optional[DgpConfig] = None,
    verbose: bool = True,
) -> Tuple[PanelDataset, Path, Path]:
    """Simulate a panel and write it as CSV with a JSON metadata sidecar.

    Args:
        m: Number of years.
        seed: Integer seed.
        output: CSV path; the sidecar is written next to it as <stem>.meta.json.
        config: Coefficients; defaults to DgpConfig().
        verbose: Print a short summary.

    Returns:
        (panel, CSV path, metadata path).
    """
    from src import __version__

    if config is None:
        config = DgpConfig()
    panel = simulate_dataset(config, m, seed)
    csv_path = panel.to_csv(output)
    meta_path = csv_path.with_name(csv_path.stem + ".meta.json")
    metadata = {
        "command": "simulate",
        "version": __version__,
        "generator": GENERATOR,
        "numpy_version": np.__version__,
        "seed": int(seed),
        "m": int(m),
        "true_mu": true_mu(config),
        "schema": {
            "outcome": SIMULATED_SCHEMA.outcome,
            "outcome_transform": SIMULATED_SCHEMA.outcome_transform,
            "binary_exposure": SIMULATED_SCHEMA.binary_exposure,
            "covariates": list(SIMULATED_SCHEMA.covariates),
            "baseline_month": SIMULATED_SCHEMA.baseline_month,
        },
        "dgp": config.to_dict(),
    }
    meta_path.write_text(json.dumps(metadata, indent=2), encoding="utf-8")
    logger.info("Simulated %d years (seed %d) -> %s", m, seed, csv_path)

    if verbose:
        print("=" * 60)
        print("Simulated panel")
        print("=" * 60)
        print(f"  Years: {panel.m}  Locations (km): {panel.locations}  Months: {panel.months}")
        print(f"  Exposure rate s1/s2: {np.nanmean(panel.variable('a')[:, 0, 1:]):.3f} / "
              f"{np.nanmean(panel.variable('a')[:, 1, 1:]):.3f}")
        print(f"  True effect: {true_mu(config):.4f}")
        print(f"  [OK] Data: {csv_path}")
        print(f"  [OK] Metadata: {meta_path}")
        print("=" * 60)
    return panel, csv_path, meta_path
