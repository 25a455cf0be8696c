"""
Exposure discretization and simple sequential imputation.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.data.panel import EXPOSURE, PanelDataset
from src.errors import EmptyWindowError, SchemaError

logger = logging.getLogger(__name__)

ALLOWED_QUANTILES = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class CutpointRule:
    """Rule turning a continuous exposure into a binary one.

    Attributes:
        locations: Grid indices of the two upstream exposure locations (s1, s2).
        quantile: Pooled sample quantile used as cutpoint (0.25, 0.5 or 0.75).
        probe_months: Month labels pooled for the quantile; None = analysis months.
        probe_years: Year labels pooled for the quantile; None = all years.
        cutpoint: Resolved cutpoint. When given up front the quantile is not
            computed (fixed thresholds such as NO3 > 1 mg/L).
    """

    locations: Tuple[int, int]
    quantile: float = 0.5
    probe_months: Optional[Tuple[int, ...]] = None
    probe_years: Optional[Tuple[int, ...]] = None
    cutpoint: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "locations", tuple(int(s) for s in self.locations))
        if len(self.locations) != 2:
            raise ValueError(f"locations must name two exposure locations, got {self.locations}")
        if self.cutpoint is None and not any(np.isclose(self.quantile, q) for q in ALLOWED_QUANTILES):
            raise ValueError(f"quantile must be one of {ALLOWED_QUANTILES}, got {self.quantile}")
        for name in ("probe_months", "probe_years"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(int(v) for v in value))

    def pooled_values(self, data: PanelDataset) -> np.ndarray:
        """Non-missing raw exposure values in the probe window."""
        if data.exposure is None:
            raise SchemaError("panel has no raw exposure variable to discretize")
        raw = data.variable(data.exposure)
        months = self.probe_months if self.probe_months is not None else data.analysis_months
        month_idx = [data.month_index(t) for t in months]
        if self.probe_years is None:
            year_mask = np.ones(data.m, dtype=bool)
        else:
            wanted = set(self.probe_years)
            year_mask = np.array([y in wanted for y in data.years])
        window = raw[year_mask][:, list(self.locations)][:, :, month_idx]
        return window[~np.isnan(window)]

    def resolve(self, data: PanelDataset) -> "CutpointRule":
        """Return this rule with the cutpoint computed on the data."""
        if self.cutpoint is not None:
            return self
        pooled = self.pooled_values(data)
        if pooled.size == 0:
            raise EmptyWindowError(
                f"no observed '{data.exposure}' values at locations {self.locations} in the probe window"
            )
        cutpoint = float(np.quantile(pooled, self.quantile, method="linear"))
        logger.debug("Cutpoint for '%s' at q=%.2f over %d values: %.6g",
                     data.exposure, self.quantile, pooled.size, cutpoint)
        return replace(self, cutpoint=cutpoint)


def discretize_exposure(data: PanelDataset, rule: CutpointRule) -> PanelDataset:
    """Set a = 1 where the raw exposure exceeds the cutpoint, else 0.

    Values equal to the cutpoint classify as 0; missing raw values stay
    missing. The raw exposure is preserved and the resolved rule is stored
    on the returned panel.

    Raises:
        EmptyWindowError: If the probe window has no observed values.
    """
    resolved = rule.resolve(data)
    raw = data.variable(data.exposure)
    a = np.where(np.isnan(raw), np.nan, (raw > resolved.cutpoint).astype(float))
    out = data.with_values(**{EXPOSURE: a})
    return replace(out, cutpoint_rule=resolved)


@dataclass
class ImputationLog:
    """Record of every missing cell visited by impute_simple."""

    records: List[Dict] = field(default_factory=list)

    COLUMNS = ("year", "location_km", "month", "variable", "rule_used", "value")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=list(self.COLUMNS))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, na_rep="NA")
        return path

    def extend(self, other: "ImputationLog") -> None:
        self.records.extend(other.records)

    @property
    def unfilled(self) -> pd.DataFrame:
        frame = self.to_frame()
        return frame[frame["rule_used"] == "unimputed"]

    @property
    def flagged_years(self) -> Tuple[int, ...]:
        """Years left with at least one missing value; candidates for exclusion."""
        return tuple(sorted({int(y) for y in self.unfilled["year"]}))


def _shift(x: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """out[..., k, ...] = x[..., k + offset, ...], NaN where that index is off the grid."""
    out = np.full_like(x, np.nan)
    n = x.shape[axis]
    if abs(offset) >= n:
        return out
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    if offset >= 0:
        src[axis] = slice(offset, n)
        dst[axis] = slice(0, n - offset)
    else:
        src[axis] = slice(0, n + offset)
        dst[axis] = slice(-offset, n)
    out[tuple(dst)] = x[tuple(src)]
    return out


IMPUTATION_RULES = (
    ("neighbours", 1, 1),
    ("next_neighbours", 1, 2),
    ("adjacent_months", 2, 1),
)


def impute_simple(data: PanelDataset, variable: str) -> Tuple[PanelDataset, ImputationLog]:
    """Fill missing values of one variable by sequential neighbour averaging.

    Rules, first applicable wins, all reading the original grid only:
    the mean of the sites immediately upstream and downstream in the same
    month; else the mean of the next sites upstream and downstream; else the
    mean of the prior and next month at the same site.

    Returns:
        The panel with the variable filled and the log of every missing cell,
        including those left unimputed.
    """
    original = np.array(data.variable(variable), copy=True)
    filled = original.copy()
    missing = np.isnan(original)
    rule_used = np.full(original.shape, "unimputed", dtype=object)
    done = np.zeros(original.shape, dtype=bool)

    for name, axis, step in IMPUTATION_RULES:
        candidate = (_shift(original, axis, -step) + _shift(original, axis, step)) / 2.0
        take = missing & ~done & ~np.isnan(candidate)
        filled[take] = candidate[take]
        rule_used[take] = name
        done |= take

    log = ImputationLog()
    for i, s, t in zip(*np.nonzero(missing)):
        value = filled[i, s, t]
        log.records.append({
            "year": data.years[i],
            "location_km": data.locations[s],
            "month": data.months[t],
            "variable": variable,
            "rule_used": rule_used[i, s, t],
            "value": None if np.isnan(value) else float(value),
        })

    n_missing = int(missing.sum())
    n_left = int((missing & ~done).sum())
    if n_missing:
        logger.info("Imputed %d of %d missing '%s' values", n_missing - n_left, n_missing, variable)
    if n_left:
        logger.warning("'%s': %d values could not be imputed (years %s)",
                       variable, n_left, list(log.flagged_years))
    return data.with_values(**{variable: filled}), log
