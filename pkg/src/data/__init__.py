"""
Data module: panel ingestion, preprocessing, screening and simulation.
"""

from .panel import EXPOSURE, CsvSchema, Observation, PanelDataset, load_csv
from .preprocess import CutpointRule, ImputationLog, discretize_exposure, impute_simple
from .screening import spearman_screen
from .generator import DgpConfig, simulate_dataset, true_mu

__all__ = [
    "EXPOSURE",
    "CsvSchema",
    "Observation",
    "PanelDataset",
    "load_csv",
    "CutpointRule",
    "ImputationLog",
    "discretize_exposure",
    "impute_simple",
    "spearman_screen",
    "DgpConfig",
    "simulate_dataset",
    "true_mu",
]
