"""
Simulation study and river analysis pipelines.
"""

from src.engine.analysis import AnalysisResult, PairResult, analyze_csv, interpolate_failures, run_analysis
from src.engine.study import StudySummary, run_study

__all__ = [
    'AnalysisResult',
    'PairResult',
    'analyze_csv',
    'interpolate_failures',
    'run_analysis',
    'StudySummary',
    'run_study',
]
