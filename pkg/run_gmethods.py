"""
G-methods runner.

Usage:
    python run_gmethods.py simulate --m 30 --seed 7
    python run_gmethods.py study --config configs/study.yaml --dgp configs/dgp.yaml
    python run_gmethods.py analyze --config configs/analysis.yaml --input data/river.csv
    python run_gmethods.py screen --config configs/analysis.yaml --input data/river.csv
"""

import sys

from src.cli import main


if __name__ == "__main__":
    sys.exit(main())
