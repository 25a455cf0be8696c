"""
Estimator registry: method names to estimator objects, and a runner that
turns estimation failures into failed reports.
"""

import logging
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from src.data.panel import PanelDataset
from src.errors import DegenerateDenominatorError, InferenceError, ModelError, SpecError
from src.gmethods.base import METHODS, EstimandSpec, EstimateReport, Estimator
from src.gmethods.gformula import gformula
from src.gmethods.msm import msm, naive_gee
from src.gmethods.snm import snm
from src.gmethods.suite import ModelSuite
from src.gmethods.weights import stabilized_weights

logger = logging.getLogger(__name__)


class GFormulaEstimator(Estimator):
    name = "gformula"

    def estimate(
        self, data: PanelDataset, spec: EstimandSpec, suite: ModelSuite, level: float = 0.90
    ) -> EstimateReport:
        return gformula(data, spec, suite.outcome, suite.covariate, level=level)


class MsmEstimator(Estimator):
    name = "msm"

    def estimate(
        self, data: PanelDataset, spec: EstimandSpec, suite: ModelSuite, level: float = 0.90
    ) -> EstimateReport:
        weights = stabilized_weights(data, spec, suite.numerator_models, suite.exposure_models)
        return msm(data, spec, weights, suite.structural, level=level)


class SnmEstimator(Estimator):
    name = "snm"

    def estimate(
        self, data: PanelDataset, spec: EstimandSpec, suite: ModelSuite, level: float = 0.90
    ) -> EstimateReport:
        return snm(data, spec, suite.outcome, suite.exposure_models, suite.covariate, level=level)


class NaiveGeeEstimator(Estimator):
    name = "gee"

    def estimate(
        self, data: PanelDataset, spec: EstimandSpec, suite: ModelSuite, level: float = 0.90
    ) -> EstimateReport:
        return naive_gee(data, spec, suite.structural, level=level)


ESTIMATORS: Dict[str, Estimator] = {
    e.name: e for e in (GFormulaEstimator(), MsmEstimator(), SnmEstimator(), NaiveGeeEstimator())
}


def validate_methods(methods: Iterable[str]) -> List[str]:
    """Return the method list, raising ValueError on unknown names."""
    methods = [m.strip() for m in methods if m.strip()]
    if not methods:
        raise ValueError(f"methods must be non-empty; valid methods: {', '.join(METHODS)}")
    unknown = [m for m in methods if m not in ESTIMATORS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; valid methods: {', '.join(METHODS)}")
    return methods


def run_method(
    method: str,
    data: PanelDataset,
    spec: EstimandSpec,
    suite: ModelSuite,
    level: float = 0.90,
    metadata: Optional[Dict[str, Any]] = None,
) -> EstimateReport:
    """Run one estimator; fitting and variance failures become a failed report.

    Raises:
        SpecError: Invalid model specification (a configuration error).
        ValueError: Unknown method.
    """
    validate_methods([method])
    try:
        report = ESTIMATORS[method].estimate(data, spec, suite, level=level)
    except SpecError:
        raise
    except (ModelError, InferenceError, DegenerateDenominatorError, np.linalg.LinAlgError) as exc:
        logger.warning("%s failed: %s", method, exc)
        return EstimateReport.failure(method, data.m, str(exc), level=level, metadata=metadata)
    report.metadata.update(metadata or {})
    return report
