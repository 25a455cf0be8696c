"""
Simulated river panels from linear-logistic structural equations.
"""

from .config import DgpConfig
from .generators import interventional_mu, replicate_seed, simulate_dataset, true_mu
from .main import SIMULATED_SCHEMA, generate_panel_data

__all__ = [
    "DgpConfig",
    "interventional_mu",
    "replicate_seed",
    "simulate_dataset",
    "true_mu",
    "SIMULATED_SCHEMA",
    "generate_panel_data",
]
