"""
M-estimation: stacked estimating equations, sandwich covariance with the
Fay correction, delta method and Wald intervals.
"""

from src.inference.mestimate import CovarianceReport, EstimatingStack, StackBuilder, fay_correct, sandwich
from src.inference.wald import CI_VARIANTS, DEFAULT_VARIANT, CiVariant, WaldInterval, delta_method, wald_ci

__all__ = [
    'CovarianceReport',
    'EstimatingStack',
    'StackBuilder',
    'fay_correct',
    'sandwich',
    'CI_VARIANTS',
    'DEFAULT_VARIANT',
    'CiVariant',
    'WaldInterval',
    'delta_method',
    'wald_ci',
]
