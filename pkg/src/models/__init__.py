"""
Regression models over panel rows: specifications, design matrices and
GLM/GEE fits with per-year score contributions.
"""

from src.models.design import Design, build_design, complete_rows
from src.models.glm import FitResult, fit_gee, fit_linear, fit_logistic, predict
from src.models.spec import ModelSpec, TermSpec

__all__ = [
    'Design',
    'build_design',
    'complete_rows',
    'FitResult',
    'fit_gee',
    'fit_linear',
    'fit_logistic',
    'predict',
    'ModelSpec',
    'TermSpec',
]
