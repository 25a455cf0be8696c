"""
Delta-method variances and Wald intervals over the eight CI variants
(uncorrected and b in {0.1, 0.3, 0.75}, normal and t(m)).
"""

from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from src.errors import NegativeVarianceError
from src.inference.mestimate import CovarianceReport, central_jacobian

VARIANCE_VARIANTS = ("uncorrected", "b0.1", "b0.3", "b0.75")
DISTRIBUTIONS = ("normal", "t")


@dataclass(frozen=True)
class CiVariant:
    """One (variance estimator, reference distribution) pair.

    Labels run I1-I4 for the normal reference with uncorrected, b=0.1, 0.3,
    0.75 variances, then I5-I8 for t(m) in the same order.
    """

    label: str
    variance: str
    dist: str

    @property
    def key(self) -> str:
        return f"{self.variance}/{self.dist}"


CI_VARIANTS: Tuple[CiVariant, ...] = tuple(
    CiVariant(f"I{k}", variance, dist)
    for k, (dist, variance) in enumerate(product(DISTRIBUTIONS, VARIANCE_VARIANTS), start=1)
)

# Reporting default: b = 0.3 with t(m).
DEFAULT_VARIANT = next(v for v in CI_VARIANTS if v.variance == "b0.3" and v.dist == "t")


def select_variants(b: Union[str, float, None] = "all", dist: str = "all") -> Tuple[CiVariant, ...]:
    """Filter CI_VARIANTS by b ('all', 'uncorrected' or a value) and distribution."""
    if dist not in ("all",) + DISTRIBUTIONS:
        raise ValueError(f"dist must be one of {('all',) + DISTRIBUTIONS}, got {dist}")
    if b is None or b == "all":
        variances = VARIANCE_VARIANTS
    elif b == "uncorrected":
        variances = ("uncorrected",)
    else:
        label = f"b{float(b):g}"
        if label not in VARIANCE_VARIANTS:
            raise ValueError(f"b must be one of 0.1, 0.3, 0.75 or 'all', got {b}")
        variances = (label,)
    dists = DISTRIBUTIONS if dist == "all" else (dist,)
    return tuple(v for v in CI_VARIANTS if v.variance in variances and v.dist in dists)


@dataclass(frozen=True)
class WaldInterval:
    """Two-sided Wald interval and p-value for H0: parameter = 0."""

    estimate: float
    se: float
    lower: float
    upper: float
    p_value: float
    level: float
    dist: str
    df: Optional[int] = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def excludes_zero(self) -> bool:
        return not self.covers(0.0)


def wald_ci(
    estimate: float,
    variance: float,
    level: float = 0.90,
    dist: str = "normal",
    df: Optional[int] = None,
) -> WaldInterval:
    """Wald interval estimate ± q·sqrt(variance), q the (1+level)/2 quantile.

    Args:
        estimate: Point estimate.
        variance: Its variance.
        level: Confidence level in (0, 1).
        dist: 'normal' or 't' (t needs df, the cluster count m).
        df: Degrees of freedom for the t reference.

    Raises:
        NegativeVarianceError: If variance < 0.
    """
    if variance < 0:
        raise NegativeVarianceError(f"variance must be non-negative, got {variance}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if dist == "normal":
        ref = stats.norm
    elif dist == "t":
        if df is None or df < 1:
            raise ValueError(f"t reference needs df >= 1, got {df}")
        ref = stats.t(df)
    else:
        raise ValueError(f"dist must be 'normal' or 't', got {dist}")

    q = float(ref.ppf((1.0 + level) / 2.0))
    se = float(np.sqrt(variance))
    if se == 0.0:
        p_value = 1.0 if estimate == 0 else 0.0
    else:
        p_value = float(2.0 * ref.sf(abs(estimate) / se))
    return WaldInterval(
        estimate=float(estimate), se=se, lower=estimate - q * se, upper=estimate + q * se,
        p_value=p_value, level=level, dist=dist, df=df if dist == "t" else None,
    )


def delta_method(
    cov: CovarianceReport,
    transform: Callable[[np.ndarray], float],
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Dict[str, float]:
    """Variance of transform(θ̂) under every covariance variant: ∇ᵀ Σ ∇.

    The gradient is analytic when supplied, else central differences.
    """
    theta = cov.theta_hat
    if gradient is not None:
        grad = np.asarray(gradient(theta), dtype=float).ravel()
    else:
        grad = central_jacobian(lambda th: np.atleast_1d(transform(th)), theta).ravel()
    out = {}
    for label, sigma in cov.variants().items():
        value = float(grad @ sigma @ grad)
        # round-off on a PSD form
        if value < 0 and value > -1e-12 * max(1.0, float(np.abs(sigma).max())):
            value = 0.0
        out[label] = value
    return out


def intervals(
    estimate: float,
    variances: Dict[str, float],
    m: int,
    level: float = 0.90,
    variants: Sequence[CiVariant] = CI_VARIANTS,
) -> Dict[str, WaldInterval]:
    """Wald intervals keyed by variant label (I1..I8)."""
    return {
        v.label: wald_ci(estimate, variances[v.variance], level, v.dist, df=m if v.dist == "t" else None)
        for v in variants
    }
