"""
Space-time causal g-methods for river panels.

Parametric g-formula, marginal structural models with stabilized weights and
structural nested mean models, with sandwich variances and a simulation
study harness.
"""

__version__ = "0.1.0"

from src.config import AnalysisConfig, StudyConfig
from src.data import DgpConfig, PanelDataset, load_csv, simulate_dataset
from src.engine import AnalysisResult, StudySummary, run_analysis, run_study
from src.gmethods import EstimandSpec, EstimateReport, default_suite, run_method

__all__ = [
    'AnalysisConfig',
    'StudyConfig',
    'DgpConfig',
    'PanelDataset',
    'load_csv',
    'simulate_dataset',
    'AnalysisResult',
    'StudySummary',
    'run_analysis',
    'run_study',
    'EstimandSpec',
    'EstimateReport',
    'default_suite',
    'run_method',
]
