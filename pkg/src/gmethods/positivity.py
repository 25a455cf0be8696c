"""
Positivity diagnostics: are both exposure levels observed at every
exposure location and month, overall and within coarse covariate strata?
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.data.panel import PanelDataset
from src.gmethods.base import S1, S2, EstimandSpec

logger = logging.getLogger(__name__)

OVERALL = "overall"


@dataclass
class PositivityReport:
    """Exposure level counts per (location, month, stratum).

    Attributes:
        counts: Frame with columns location, location_km, month, stratum,
            n_a0, n_a1, flagged.
        flags: Human-readable description of every empty level.
    """

    counts: pd.DataFrame
    flags: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags

    @property
    def n_flagged(self) -> int:
        return len(self.flags)

    def __str__(self) -> str:
        if self.ok:
            return "positivity: no empty exposure levels"
        return "positivity: " + "; ".join(self.flags)


def _strata(values: np.ndarray, name: str):
    """Median split of one covariate column; yields (label, mask)."""
    observed = values[~np.isnan(values)]
    if observed.size < 2:
        return
    median = float(np.median(observed))
    yield f"{name}<=median", values <= median
    yield f"{name}>median", values > median


def positivity_check(
    data: PanelDataset,
    spec: EstimandSpec,
    covariates: Optional[Sequence[str]] = None,
) -> PositivityReport:
    """Count a=0 and a=1 at s1 and s2 for each analysis month.

    Args:
        data: Panel with the discretized exposure.
        spec: Estimand (locations and months in scope).
        covariates: Covariates for the median-split strata; defaults to the
            panel's registered covariates.

    Returns:
        PositivityReport; any stratum missing a level is flagged.
    """
    chain = spec.chain_view(data)
    a = chain.variable(spec.exposure)
    if covariates is None:
        covariates = [c for c in chain.covariates if chain.has(c)]
    months = spec.months if spec.months is not None else chain.analysis_months

    rows = []
    flags = []
    for position, role in ((S1, "s1"), (S2, "s2")):
        for month in months:
            t = chain.month_index(month)
            exposure = a[:, position, t]
            strata = [(OVERALL, np.ones(chain.m, dtype=bool))]
            for name in covariates:
                strata.extend(_strata(chain.variable(name)[:, position, t], name))
            for label, mask in strata:
                values = exposure[mask & ~np.isnan(exposure)]
                n1 = int((values == 1.0).sum())
                n0 = int(values.size - n1)
                flagged = n0 == 0 or n1 == 0
                rows.append({
                    "location": role,
                    "location_km": chain.locations[position],
                    "month": month,
                    "stratum": label,
                    "n_a0": n0,
                    "n_a1": n1,
                    "flagged": flagged,
                })
                if flagged:
                    empty = "a=0" if n0 == 0 else "a=1"
                    if n0 == 0 and n1 == 0:
                        empty = "both levels"
                    flags.append(f"{role} ({chain.locations[position]:g} km) month {month} {label}: no {empty}")

    for message in flags:
        logger.warning("Positivity: %s", message)
    return PositivityReport(counts=pd.DataFrame(rows), flags=flags)
