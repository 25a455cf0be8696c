"""
Estimand specification and the report shared by all estimators.
"""

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.data.panel import EXPOSURE, PanelDataset
from src.errors import SchemaError, SpecError
from src.inference.mestimate import CovarianceReport
from src.inference.wald import (
    CI_VARIANTS,
    DEFAULT_VARIANT,
    VARIANCE_VARIANTS,
    CiVariant,
    WaldInterval,
    delta_method,
    intervals,
)
from src.models.spec import ModelSpec

if TYPE_CHECKING:
    from src.gmethods.suite import ModelSuite

logger = logging.getLogger(__name__)

METHODS = ("gformula", "msm", "snm", "gee")

# Positions of the estimand chain once the panel is cut down to (s1, s2, s*).
S1, S2, TARGET = 0, 1, 2


@dataclass(frozen=True)
class EstimandSpec:
    """Average effect at a target site of setting two upstream exposures.

    Attributes:
        s1: Grid index of the upper exposure location.
        s2: Grid index of the lower exposure location (s1 < s2).
        target: Grid index of the outcome location (s2 < target).
        months: Month labels averaged over; None = the panel's analysis months.
        exposure: Binary exposure variable.
        high: Exposure levels (at s1, at s2) of the first arm.
        low: Exposure levels (at s1, at s2) of the reference arm.
    """

    s1: int
    s2: int
    target: int
    months: Optional[Tuple[int, ...]] = None
    exposure: str = EXPOSURE
    high: Tuple[int, int] = (1, 1)
    low: Tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if not 0 <= self.s1 < self.s2 < self.target:
            raise SpecError(
                f"locations must satisfy s1 < s2 < target, got ({self.s1}, {self.s2}, {self.target})"
            )
        for arm in (self.high, self.low):
            if len(arm) != 2 or any(v not in (0, 1) for v in arm):
                raise SpecError(f"contrast levels must be two binary values, got {arm}")
        if tuple(self.high) == tuple(self.low):
            raise SpecError("contrast arms must differ")
        object.__setattr__(self, "high", tuple(int(v) for v in self.high))
        object.__setattr__(self, "low", tuple(int(v) for v in self.low))
        if self.months is not None:
            object.__setattr__(self, "months", tuple(int(t) for t in self.months))

    @property
    def chain(self) -> Tuple[int, int, int]:
        return (self.s1, self.s2, self.target)

    @property
    def contrast(self) -> Tuple[int, int]:
        """Level differences (at s1, at s2) between the two arms."""
        return (self.high[0] - self.low[0], self.high[1] - self.low[1])

    def chain_view(self, data: PanelDataset) -> PanelDataset:
        """The panel restricted to (s1, s2, s*), in that order."""
        if self.target >= data.n_s:
            raise SpecError(f"target index {self.target} outside a grid of {data.n_s} locations")
        if not data.has(self.exposure):
            raise SchemaError(f"exposure '{self.exposure}' not on the panel; discretize first")
        return data.select_locations(self.chain)


def require_anchor(model: ModelSpec, position: int, role: str) -> None:
    anchor = model.location if model.location >= 0 else 3 + model.location
    if anchor != position:
        raise SpecError(f"{role} model must be anchored at chain position {position}, got {model.location}")


@dataclass
class EstimateReport:
    """Point estimate of μ with its eight interval variants.

    Attributes:
        method: 'gformula', 'msm', 'snm' or 'gee'.
        mu_hat: Estimated effect (log2 outcome difference).
        m: Number of clusters (years).
        level: Confidence level.
        components: Named component estimates μ is built from.
        variances: Variance of μ̂ per variance variant.
        intervals: WaldInterval per CI variant label (I1..I8).
        diagnostics: Weight summaries, convergence flags, positivity notes.
        failed: True when estimation failed; mu_hat is then NaN.
        error: Failure message.
        metadata: Setting labels (locations, nutrient, cutpoint, ...).
        covariance: Full covariance report of the stack.
    """

    method: str
    mu_hat: float
    m: int
    level: float = 0.90
    components: Dict[str, float] = field(default_factory=dict)
    variances: Dict[str, float] = field(default_factory=dict)
    intervals: Dict[str, WaldInterval] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    failed: bool = False
    error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    covariance: Optional[CovarianceReport] = field(default=None, repr=False)

    @classmethod
    def failure(cls, method: str, m: int, error: str, level: float = 0.90,
                metadata: Optional[Dict[str, Any]] = None) -> "EstimateReport":
        return cls(method=method, mu_hat=float("nan"), m=m, level=level, failed=True,
                   error=error, metadata=dict(metadata or {}))

    def interval(self, variant: Union[str, CiVariant] = DEFAULT_VARIANT) -> WaldInterval:
        label = variant.label if isinstance(variant, CiVariant) else variant
        return self.intervals[label]

    def significant(self, variant: Union[str, CiVariant] = DEFAULT_VARIANT) -> bool:
        label = variant.label if isinstance(variant, CiVariant) else variant
        if self.failed or label not in self.intervals:
            return False
        return self.intervals[label].excludes_zero

    def to_record(self, variants: Sequence[CiVariant] = CI_VARIANTS) -> Dict[str, Any]:
        """Flat row for CSV export."""
        record: Dict[str, Any] = {"method": self.method}
        record.update(self.metadata)
        record.update({"m": self.m, "level": self.level, "mu_hat": self.mu_hat, "failed": self.failed})
        used = {v.variance for v in variants}
        for variance in VARIANCE_VARIANTS:
            if variance in used:
                value = self.variances.get(variance, float("nan"))
                record[f"se_{variance}"] = math.sqrt(value) if value >= 0 else float("nan")
        for v in variants:
            ci = self.intervals.get(v.label)
            record[f"{v.label}_lower"] = ci.lower if ci else float("nan")
            record[f"{v.label}_upper"] = ci.upper if ci else float("nan")
            record[f"{v.label}_p"] = ci.p_value if ci else float("nan")
        for key, value in self.components.items():
            record[f"component_{key}"] = value
        for key, value in self.diagnostics.items():
            if np.isscalar(value) or value is None:
                record[f"diag_{key}"] = value
        record["error"] = self.error
        return record

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "metadata": self.metadata,
            "m": self.m,
            "level": self.level,
            "mu_hat": self.mu_hat,
            "failed": self.failed,
            "error": self.error,
            "components": self.components,
            "variances": self.variances,
            "intervals": {
                v.label: {
                    "variance": v.variance, "dist": v.dist,
                    **{k: getattr(self.intervals[v.label], k) for k in ("se", "lower", "upper", "p_value")},
                }
                for v in CI_VARIANTS if v.label in self.intervals
            },
            "diagnostics": _jsonable(self.diagnostics),
        }

    def __str__(self) -> str:
        if self.failed:
            return f"{self.method}: failed ({self.error})"
        if DEFAULT_VARIANT.label not in self.intervals:
            return f"{self.method:<9} mu_hat={self.mu_hat:8.4f}  (no interval)"
        ci = self.interval()
        star = " *" if self.significant() else ""
        return (f"{self.method:<9} mu_hat={self.mu_hat:8.4f}  "
                f"{DEFAULT_VARIANT.label} [{ci.lower:8.4f}, {ci.upper:8.4f}]{star}")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def build_report(
    method: str,
    cov: CovarianceReport,
    transform: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    components: Dict[str, float],
    level: float = 0.90,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> EstimateReport:
    """Assemble a report: μ̂ = transform(θ̂), variances by the delta method, all intervals."""
    mu_hat = float(transform(cov.theta_hat))
    variances = delta_method(cov, transform, gradient)
    return EstimateReport(
        method=method,
        mu_hat=mu_hat,
        m=cov.m,
        level=level,
        components=components,
        variances=variances,
        intervals=intervals(mu_hat, variances, cov.m, level),
        diagnostics=dict(diagnostics or {}),
        covariance=cov,
    )


def reports_to_frame(reports: Sequence[EstimateReport], variants: Sequence[CiVariant] = CI_VARIANTS) -> pd.DataFrame:
    return pd.DataFrame([r.to_record(variants) for r in reports])


def write_reports(
    reports: Sequence[EstimateReport],
    path: Union[str, Path],
    variants: Sequence[CiVariant] = CI_VARIANTS,
) -> Tuple[Path, Path]:
    """Write reports as CSV and as a JSON list next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_to_frame(reports, variants).to_csv(path, index=False)
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps([r.to_dict() for r in reports], indent=2, default=str), encoding="utf-8")
    return path, json_path


class Estimator(ABC):
    """Interface of the four estimators of μ.

    Subclasses implement estimate, fitting whatever working models of the
    suite they need and returning a complete report.
    """

    name: str = ""

    @abstractmethod
    def estimate(
        self,
        data: PanelDataset,
        spec: EstimandSpec,
        suite: "ModelSuite",
        level: float = 0.90,
    ) -> EstimateReport:
        """Estimate μ for one estimand.

        Args:
            data: Panel with the discretized exposure.
            spec: Estimand.
            suite: Working models.
            level: Confidence level.

        Returns:
            EstimateReport for this method.
        """
        pass
