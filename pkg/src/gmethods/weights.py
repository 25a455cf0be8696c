"""
Stabilized inverse probability weights over the two exposure locations.

The weight of a (year, month) row is the product, over both exposure
locations and every analysis month up to the row's month, of the ratio of
the exposure density given exposure history only to the density given the
full observed history.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.data.panel import PanelDataset
from src.errors import SpecError
from src.gmethods.base import S1, S2, EstimandSpec, require_anchor
from src.models.design import complete_rows, month_indices
from src.models.glm import FitResult, fit_logistic
from src.models.spec import ModelSpec

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-4


def stabilized_ratio(
    a: np.ndarray,
    p_numerator: np.ndarray,
    p_denominator: np.ndarray,
    floor: float = DENOMINATOR_FLOOR,
) -> Tuple[np.ndarray, int]:
    """Density ratio f(a; p_num) / f(a; p_den) with the denominator floored.

    Returns:
        (ratios, number of floored denominators).
    """
    a = np.asarray(a, dtype=float)
    f_num = np.where(a == 1.0, p_numerator, 1.0 - p_numerator)
    f_den = np.where(a == 1.0, p_denominator, 1.0 - p_denominator)
    truncated = f_den < floor
    return f_num / np.where(truncated, floor, f_den), int(truncated.sum())


def accumulate_weights(ratios: np.ndarray, rows: np.ndarray, month_idx: np.ndarray) -> np.ndarray:
    """Cumulative product over the analysis months of per-row ratios.

    Args:
        ratios: (m, n_months) grid of per-month ratios (any value outside rows).
        rows: (m, n_months) mask of rows with a defined ratio.
        month_idx: Grid indices of the analysis months, in time order.

    Returns:
        (m, n_months) weight grid, 1.0 outside the analysis months.
    """
    out = np.ones(ratios.shape)
    sub = np.where(rows[:, month_idx], ratios[:, month_idx], 1.0)
    out[:, month_idx] = np.cumprod(sub, axis=1)
    return out


def monotone_rows(rows: np.ndarray, month_idx: np.ndarray) -> np.ndarray:
    """Keep a row only when every earlier analysis month of its year is kept.

    Leading months with no row in any year (lags reaching before the grid)
    do not count as earlier months.
    """
    out = np.zeros(rows.shape, dtype=bool)
    sub = rows[:, month_idx]
    defined = np.flatnonzero(sub.any(axis=0))
    if defined.size == 0:
        return out
    start = defined[0]
    out[:, month_idx[start:]] = np.logical_and.accumulate(sub[:, start:], axis=1)
    return out


@dataclass(eq=False)
class WeightSet:
    """Stabilized weights with the fits that produced them.

    Attributes:
        weights: (m, n_months) weight grid; 1.0 outside rows.
        rows: (m, n_months) rows with a defined weight.
        numerator_fits: Numerator fits at (s1, s2).
        denominator_fits: Denominator fits at (s1, s2).
        month_idx: Grid indices of the analysis months.
        truncated: Number of floored denominator densities.
        floor: Denominator density floor.
    """

    weights: np.ndarray
    rows: np.ndarray
    numerator_fits: Tuple[FitResult, FitResult]
    denominator_fits: Tuple[FitResult, FitResult]
    month_idx: np.ndarray
    truncated: int = 0
    floor: float = DENOMINATOR_FLOOR

    @property
    def fits(self) -> Tuple[FitResult, ...]:
        """Numerator fits then denominator fits, the stacking order."""
        return tuple(self.numerator_fits) + tuple(self.denominator_fits)

    def values(self) -> np.ndarray:
        return self.weights[self.rows]

    def grid_from(self, params: Sequence[np.ndarray]) -> np.ndarray:
        """Weight grid recomputed from coefficient vectors, in `fits` order."""
        ratios = np.ones(self.weights.shape)
        num_params, den_params = params[:2], params[2:]
        for num, den, p_num, p_den in zip(self.numerator_fits, self.denominator_fits, num_params, den_params):
            a = num.design.y
            r, _ = stabilized_ratio(a, expit(num.design.X @ p_num), expit(den.design.X @ p_den), self.floor)
            ratios *= num.design.to_grid(r)
        return accumulate_weights(ratios, self.rows, self.month_idx)

    def summary(self) -> Dict[str, float]:
        w = self.values()
        return {
            "sw_min": float(w.min()) if w.size else float("nan"),
            "sw_max": float(w.max()) if w.size else float("nan"),
            "sw_mean": float(w.mean()) if w.size else float("nan"),
            "sw_sd": float(w.std(ddof=1)) if w.size > 1 else float("nan"),
            "sw_truncated": self.truncated,
            "sw_rows": int(w.size),
        }


def stabilized_weights(
    data: PanelDataset,
    spec: EstimandSpec,
    numerator: Sequence[ModelSpec],
    denominator: Sequence[ModelSpec],
    rows: Optional[np.ndarray] = None,
    floor: float = DENOMINATOR_FLOOR,
) -> WeightSet:
    """Fit the weight models and form the stabilized weights.

    Args:
        data: Panel with the discretized exposure.
        spec: Estimand.
        numerator: Exposure-history models at (s1, s2).
        denominator: Full-history models at (s1, s2).
        rows: Optional (m, n_months) mask further restricting the rows.
        floor: Denominator density floor.

    Raises:
        ConvergenceError: A weight model failed to converge.
        SpecError: Models are not binomial models of the exposure.
    """
    if len(numerator) != 2 or len(denominator) != 2:
        raise SpecError("weights need one numerator and one denominator model per exposure location")
    for model, position, role in zip(
        list(numerator) + list(denominator), (S1, S2, S1, S2),
        ("numerator_s1", "numerator_s2", "denominator_s1", "denominator_s2"),
    ):
        require_anchor(model, position, role)
        if model.family != "binomial" or model.response.variable != spec.exposure:
            raise SpecError(f"{role} model must be a binomial model of {spec.exposure}")

    chain = spec.chain_view(data)
    month_idx = month_indices(chain, numerator[0], spec.months)
    fit_rows = complete_rows(chain, list(numerator) + list(denominator), spec.months)
    if rows is not None:
        fit_rows &= rows
    fit_rows = monotone_rows(fit_rows, month_idx)

    num_fits = tuple(fit_logistic(chain, model, rows=fit_rows, months=spec.months) for model in numerator)
    den_fits = tuple(fit_logistic(chain, model, rows=fit_rows, months=spec.months) for model in denominator)

    ratios = np.ones((chain.m, chain.n_months))
    truncated = 0
    for num, den in zip(num_fits, den_fits):
        p_num = expit(num.linear_predictor())
        p_den = expit(den.linear_predictor())
        r, k = stabilized_ratio(num.design.y, p_num, p_den, floor)
        ratios *= num.design.to_grid(r)
        truncated += k
    weights = accumulate_weights(ratios, fit_rows, month_idx)
    if truncated:
        logger.warning("Stabilized weights: %d denominator densities floored at %g", truncated, floor)

    result = WeightSet(
        weights=weights, rows=fit_rows, numerator_fits=num_fits, denominator_fits=den_fits,
        month_idx=month_idx, truncated=truncated, floor=floor,
    )
    logger.debug("Weights: %s", result.summary())
    return result
