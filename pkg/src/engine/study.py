"""
Simulation study: bias and interval coverage of the estimators over
replicated datasets from the structural data-generating process.
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from src.config import StudyConfig
from src.data.generator import DgpConfig, replicate_seed, simulate_dataset, true_mu
from src.data.generator.generators import GENERATOR
from src.gmethods.base import METHODS, S1, S2, TARGET, EstimandSpec
from src.gmethods.registry import run_method
from src.gmethods.suite import default_suite
from src.inference.wald import CiVariant

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "method", "m", "ci_variant", "variance", "dist",
    "mean_abs_bias", "mean_bias", "coverage", "mcse_coverage", "mean_width",
    "failures", "successes", "replicates",
]


# Module level so ProcessPoolExecutor can pickle it.
def _run_replicate(args: Tuple[DgpConfig, int, int, int, Tuple[str, ...], float, float]) -> List[Dict[str, Any]]:
    """Simulate replicate r at size m and run every method on it."""
    dgp, m, r, base_seed, methods, level, truth = args
    data = simulate_dataset(dgp, m, replicate_seed(base_seed, m, r))
    spec = EstimandSpec(S1, S2, TARGET)
    suite = default_suite()

    records = []
    for method in methods:
        report = run_method(method, data, spec, suite, level=level)
        record: Dict[str, Any] = {
            "method": method,
            "m": m,
            "replicate": r,
            "mu_hat": report.mu_hat,
            "failed": report.failed,
            "error": report.error,
        }
        for label, ci in report.intervals.items():
            record[f"{label}_covers"] = ci.covers(truth)
            record[f"{label}_width"] = ci.width
        records.append(record)
    return records


@dataclass
class StudySummary:
    """Replicate-level results of a study and their aggregation.

    Attributes:
        replicates: One row per (method, m, replicate) with mu_hat, failure
            flag and per-variant coverage indicator and width.
        true_mu: Effect the estimates are compared against.
        variants: CI variants reported in the table.
        study: Study configuration.
        dgp: Structural coefficients.
        elapsed: Wall time in seconds.
    """

    replicates: pd.DataFrame
    true_mu: float
    variants: Tuple[CiVariant, ...]
    study: StudyConfig
    dgp: DgpConfig
    elapsed: float = field(default=0.0, repr=False)

    @cached_property
    def table(self) -> pd.DataFrame:
        """Per (method, m, CI variant): bias, coverage, width and failure counts."""
        rows = []
        order = [m for m in METHODS if m in self.study.methods]
        for method in order:
            for m in self.study.m_values:
                group = self.replicates[(self.replicates["method"] == method) & (self.replicates["m"] == m)]
                ok = group[~group["failed"]]
                n_ok = len(ok)
                mean_mu = float(ok["mu_hat"].mean()) if n_ok else float("nan")
                for v in self.variants:
                    covers = ok[f"{v.label}_covers"].astype(float) if n_ok else pd.Series(dtype=float)
                    coverage = float(covers.mean()) if n_ok else float("nan")
                    rows.append({
                        "method": method,
                        "m": m,
                        "ci_variant": v.label,
                        "variance": v.variance,
                        "dist": v.dist,
                        "mean_abs_bias": abs(mean_mu - self.true_mu),
                        "mean_bias": mean_mu - self.true_mu,
                        "coverage": coverage,
                        "mcse_coverage": float(np.sqrt(coverage * (1.0 - coverage) / n_ok)) if n_ok else float("nan"),
                        "mean_width": float(ok[f"{v.label}_width"].mean()) if n_ok else float("nan"),
                        "failures": int(group["failed"].sum()),
                        "successes": n_ok,
                        "replicates": len(group),
                    })
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    @property
    def n_failures(self) -> int:
        return int(self.replicates["failed"].sum())

    def bias(self, method: str, m: int) -> float:
        """Mean absolute bias of one method at one sample size."""
        row = self.table[(self.table["method"] == method) & (self.table["m"] == m)]
        return float(row["mean_abs_bias"].iloc[0])

    def coverage(self, method: str, m: int, variant: str) -> float:
        t = self.table
        row = t[(t["method"] == method) & (t["m"] == m) & (t["ci_variant"] == variant)]
        return float(row["coverage"].iloc[0])

    def metadata(self) -> Dict[str, Any]:
        from src import __version__

        return {
            "command": "study",
            "version": __version__,
            "generator": GENERATOR,
            "numpy_version": np.__version__,
            "base_seed": self.study.base_seed,
            "m_values": list(self.study.m_values),
            "replicates_per_m": self.study.replicates,
            "methods": list(self.study.methods),
            "level": self.study.level,
            "variants": [v.label for v in self.variants],
            "true_mu": self.true_mu,
            "failures": self.n_failures,
            "elapsed_seconds": round(self.elapsed, 3),
            "dgp": self.dgp.to_dict(),
        }

    def to_csv(self, path: Union[str, Path], replicates: bool = False) -> Tuple[Path, Path]:
        """Write the summary table and a <stem>.meta.json sidecar.

        Args:
            path: CSV path for the table.
            replicates: Also write the replicate-level rows as <stem>.replicates.csv.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(path, index=False)
        if replicates:
            self.replicates.to_csv(path.with_name(path.stem + ".replicates.csv"), index=False)
        meta_path = path.with_name(path.stem + ".meta.json")
        meta_path.write_text(json.dumps(self.metadata(), indent=2), encoding="utf-8")
        return path, meta_path

    def __str__(self) -> str:
        lines = [
            "=" * 60,
            "SIMULATION STUDY",
            "=" * 60,
            "",
            f"  True effect:       {self.true_mu:>10.4f}",
            f"  Replicates per m:  {self.study.replicates:>10d}",
            f"  Failed fits:       {self.n_failures:>10d}",
            f"  Elapsed:           {self.elapsed:>9.1f}s",
            "",
            f"  {'method':<9}{'m':>4}{'|bias|':>10}" + "".join(f"{v.label:>8}" for v in self.variants),
        ]
        t = self.table
        for (method, m), group in t.groupby(["method", "m"], sort=False):
            cov = group.set_index("ci_variant")["coverage"]
            lines.append(
                f"  {method:<9}{m:>4}{group['mean_abs_bias'].iloc[0]:>10.4f}"
                + "".join(f"{cov[v.label]:>8.3f}" for v in self.variants)
            )
        lines.append("=" * 60)
        return "\n".join(lines)


def _tasks(dgp: DgpConfig, study: StudyConfig, truth: float) -> List[tuple]:
    methods = tuple(study.methods)
    return [
        (dgp, m, r, study.base_seed, methods, study.level, truth)
        for m in study.m_values
        for r in range(study.replicates)
    ]


def run_study(dgp: DgpConfig, study: StudyConfig, verbose: bool = False) -> StudySummary:
    """Replicate the simulation and aggregate bias and coverage.

    Each (m, replicate) draws from its own seed stream, so results do not
    depend on the number of workers or the completion order.

    Args:
        dgp: Structural coefficients.
        study: Sample sizes, replicate count, methods and CI selection.
        verbose: Print progress lines.

    Returns:
        StudySummary over all replicates.
    """
    truth = true_mu(dgp)
    tasks = _tasks(dgp, study, truth)
    start = time.time()
    logger.info("Study: %d datasets (m in %s), methods %s, %d worker(s)",
                len(tasks), study.m_values, study.methods, study.workers)

    records: List[Dict[str, Any]] = []
    if study.workers == 1:
        for k, task in enumerate(tasks, start=1):
            records.extend(_run_replicate(task))
            if verbose and k % max(1, len(tasks) // 10) == 0:
                print(f"  [INFO] {k}/{len(tasks)} datasets done")
    else:
        with ProcessPoolExecutor(max_workers=study.workers) as executor:
            futures = {executor.submit(_run_replicate, task): k for k, task in enumerate(tasks)}
            completed = 0
            for future in as_completed(futures):
                records.extend(future.result())
                completed += 1
                if verbose and completed % max(1, len(tasks) // 10) == 0:
                    print(f"  [INFO] {completed}/{len(tasks)} datasets done")

    order = {name: k for k, name in enumerate(METHODS)}
    records.sort(key=lambda rec: (order[rec["method"]], rec["m"], rec["replicate"]))
    frame = pd.DataFrame(records)
    elapsed = time.time() - start

    failures = int(frame["failed"].sum()) if not frame.empty else 0
    if failures:
        logger.warning("Study: %d of %d fits failed", failures, len(frame))
    logger.info("Study finished in %.1fs", elapsed)
    return StudySummary(
        replicates=frame, true_mu=truth, variants=study.variants, study=study, dgp=dgp, elapsed=elapsed,
    )

