"""
Exploratory rank-correlation screening of upstream nutrients against the
downstream outcome.
"""

import logging
import warnings
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from src.data.panel import PanelDataset

logger = logging.getLogger(__name__)

MIN_PAIRS = 3


def spearman_screen(
    data: PanelDataset,
    target: int,
    nutrients: Sequence[str],
    outcome: Optional[str] = None,
) -> pd.DataFrame:
    """Spearman correlation of each upstream nutrient series with the outcome at the target.

    Pairs are matched on (year, month) and pooled over both.

    Args:
        data: Panel holding the nutrient and outcome variables.
        target: Grid index of the outcome location s*.
        nutrients: Nutrient variable names.
        outcome: Outcome variable; defaults to the panel's outcome.

    Returns:
        DataFrame (location_km, nutrient, rho, n) ordered upstream to downstream.
    """
    outcome = outcome or data.outcome
    y = data.variable(outcome)[:, target, :].ravel()
    rows = []
    for s in range(target):
        for nutrient in nutrients:
            x = data.variable(nutrient)[:, s, :].ravel()
            ok = ~np.isnan(x) & ~np.isnan(y)
            n = int(ok.sum())
            if n < MIN_PAIRS:
                logger.warning("Skipping %s at %.1f km: only %d paired values", nutrient, data.locations[s], n)
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", stats.ConstantInputWarning)
                rho, _ = stats.spearmanr(x[ok], y[ok])
            if np.isnan(rho):
                logger.warning("%s at %.1f km is constant; rho undefined", nutrient, data.locations[s])
            rows.append({"location_km": data.locations[s], "nutrient": nutrient, "rho": float(rho), "n": n})
    return pd.DataFrame(rows, columns=["location_km", "nutrient", "rho", "n"])
