"""
Estimators of the two-location exposure effect.

Provides the parametric g-formula, the IPW-fitted marginal structural
model, the structural nested mean model and the naive GEE baseline.
"""

from src.gmethods.base import METHODS, EstimandSpec, EstimateReport, Estimator, build_report, write_reports
from src.gmethods.gformula import gformula
from src.gmethods.msm import msm, naive_gee
from src.gmethods.positivity import PositivityReport, positivity_check
from src.gmethods.registry import ESTIMATORS, run_method, validate_methods
from src.gmethods.snm import SnmBlocks, snm, snm_blocks
from src.gmethods.suite import ModelSuite, default_suite
from src.gmethods.weights import WeightSet, stabilized_ratio, stabilized_weights

__all__ = [
    'METHODS',
    'EstimandSpec',
    'EstimateReport',
    'Estimator',
    'build_report',
    'write_reports',
    'gformula',
    'msm',
    'naive_gee',
    'PositivityReport',
    'positivity_check',
    'ESTIMATORS',
    'run_method',
    'validate_methods',
    'SnmBlocks',
    'snm',
    'snm_blocks',
    'ModelSuite',
    'default_suite',
    'WeightSet',
    'stabilized_ratio',
    'stabilized_weights',
]
