"""
River analysis pipeline: load, impute, discretize and estimate the effect of
each adjacent pair of upstream locations on the outcome site.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.config import AnalysisConfig
from src.data.panel import PanelDataset, load_csv
from src.data.preprocess import CutpointRule, ImputationLog, discretize_exposure, impute_simple
from src.errors import SchemaError, SpecError
from src.gmethods.base import DEFAULT_VARIANT, EstimandSpec, EstimateReport
from src.gmethods.positivity import positivity_check
from src.gmethods.registry import run_method
from src.gmethods.suite import ModelSuite, default_suite, suite_summary
from src.inference.wald import CiVariant

logger = logging.getLogger(__name__)


@dataclass
class PairResult:
    """Estimates for one (s1, s2) pair."""

    s1: int
    s2: int
    s1_km: float
    s2_km: float
    cutpoint: float
    reports: Dict[str, EstimateReport] = field(default_factory=dict)


@dataclass
class AnalysisResult:
    """All pair estimates of one nutrient, with the preprocessing record.

    Attributes:
        pairs: One PairResult per adjacent upstream pair, upstream first.
        config: Analysis configuration.
        target_km: Outcome site.
        excluded_years: Years dropped because a variable could not be imputed.
        imputation: Log of every missing cell visited.
        suite: Working models (formula strings).
    """

    pairs: List[PairResult]
    config: AnalysisConfig
    target_km: float
    excluded_years: Tuple[int, ...] = ()
    imputation: ImputationLog = field(default_factory=ImputationLog)
    suite: Dict[str, str] = field(default_factory=dict)

    @property
    def star_variant(self) -> CiVariant:
        variants = self.config.variants
        return variants[0] if len(variants) == 1 else DEFAULT_VARIANT

    @property
    def reports(self) -> List[EstimateReport]:
        return [r for pair in self.pairs for r in pair.reports.values()]

    @cached_property
    def table(self) -> pd.DataFrame:
        """One row per (pair, method) with every selected interval and a star column."""
        variant = self.star_variant
        rows = []
        for report in self.reports:
            record = report.to_record(self.config.variants)
            record["significant"] = "*" if report.significant(variant) else ""
            rows.append(record)
        return pd.DataFrame(rows)

    def metadata(self) -> Dict[str, Any]:
        from src import __version__

        return {
            "command": "analyze",
            "version": __version__,
            "target_km": self.target_km,
            "pairs": len(self.pairs),
            "excluded_years": list(self.excluded_years),
            "star_variant": self.star_variant.label,
            "config": asdict(self.config),
            "models": self.suite,
        }

    def to_csv(self, path: Union[str, Path]) -> Dict[str, Path]:
        """Write the estimate table, a JSON version, the imputation log and metadata."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(path, index=False)
        json_path = path.with_suffix(".json")
        json_path.write_text(
            json.dumps([r.to_dict() for r in self.reports], indent=2, default=str), encoding="utf-8"
        )
        log_path = self.imputation.to_csv(path.with_name(path.stem + ".imputation.csv"))
        meta_path = path.with_name(path.stem + ".meta.json")
        meta_path.write_text(json.dumps(self.metadata(), indent=2, default=str), encoding="utf-8")
        return {"table": path, "json": json_path, "imputation": log_path, "metadata": meta_path}

    def __str__(self) -> str:
        variant = self.star_variant
        lines = [
            "=" * 60,
            f"ANALYSIS: {self.config.nutrient} -> {self.config.outcome_column} at {self.target_km:g} km",
            "=" * 60,
            f"  {'s1 km':>7}{'s2 km':>7}  {'method':<9}{'mu_hat':>9}  {variant.label} interval",
        ]
        for pair in self.pairs:
            for method, r in pair.reports.items():
                if r.failed:
                    body = "failed"
                elif variant.label in r.intervals:
                    ci = r.intervals[variant.label]
                    star = " *" if r.significant(variant) else ""
                    body = f"{r.mu_hat:9.3f}  [{ci.lower:7.3f}, {ci.upper:7.3f}]{star}"
                else:
                    body = f"{r.mu_hat:9.3f}  (interpolated)"
                lines.append(f"  {pair.s1_km:>7g}{pair.s2_km:>7g}  {method:<9}{body}")
        if self.excluded_years:
            lines.append(f"  Excluded years: {list(self.excluded_years)}")
        lines.append("=" * 60)
        return "\n".join(lines)


def prepare_panel(
    data: PanelDataset,
    config: AnalysisConfig,
    target: Optional[int] = None,
) -> Tuple[PanelDataset, ImputationLog, Tuple[int, ...]]:
    """Impute the analysis variables and drop years left incomplete.

    Only cells the pair chains read count towards exclusion: with a target
    index, locations downstream of it are ignored.

    Returns:
        (panel, imputation log, excluded years).
    """
    variables = ["y", config.nutrient, config.resolved_space_covariate, *config.other_covariates]
    for name in variables:
        if not data.has(name):
            raise SchemaError(f"variable '{name}' missing from the input")
    log = ImputationLog()
    if not config.impute:
        return data, log, ()

    for name in dict.fromkeys(variables):
        data, step = impute_simple(data, name)
        log.extend(step)
    unfilled = log.unfilled
    if target is not None:
        outside = ~unfilled["location_km"].isin(list(data.locations[: target + 1]))
        if outside.any():
            logger.info("Ignoring %d unimputed cells downstream of the target", int(outside.sum()))
        unfilled = unfilled[~outside]
    excluded = tuple(sorted({int(y) for y in unfilled["year"]}))
    if excluded:
        logger.warning("Excluding years with unimputed values: %s", list(excluded))
        if len(excluded) >= data.m:
            raise SchemaError("every year has unimputed values; nothing left to analyse")
        data = data.drop_years(excluded)
    return data, log, excluded


def build_suite(config: AnalysisConfig) -> ModelSuite:
    suite = default_suite(
        exposure="a",
        outcome="y",
        space_covariate=config.resolved_space_covariate,
        other_covariates=tuple(config.other_covariates),
        interaction=config.interaction,
        lagged_outcome=config.lagged_outcome,
    )
    if config.models:
        suite = ModelSuite.from_dict(config.models, base=suite)
    return suite


def resolve_target(data: PanelDataset, target_km: Optional[float]) -> int:
    target = data.n_s - 1 if target_km is None else data.location_index(target_km)
    if target < 2:
        raise SpecError(f"target at {data.locations[target]:g} km needs two upstream locations")
    return target


def estimate_pair(
    data: PanelDataset,
    s1: int,
    target: int,
    config: AnalysisConfig,
    suite: ModelSuite,
) -> PairResult:
    """Discretize at the pair's cutpoint and run every configured method."""
    s2 = s1 + 1
    rule = CutpointRule(
        locations=(s1, s2),
        quantile=config.quantile,
        probe_months=config.probe_months,
        probe_years=config.probe_years,
        cutpoint=config.cutpoint,
    )
    panel = discretize_exposure(data, rule)
    cutpoint = panel.cutpoint_rule.cutpoint
    spec = EstimandSpec(s1, s2, target, months=config.months)
    positivity = positivity_check(panel, spec, [suite.space_covariate, *config.other_covariates])

    metadata = {
        "nutrient": config.nutrient,
        "s1_km": data.locations[s1],
        "s2_km": data.locations[s2],
        "target_km": data.locations[target],
        "cutpoint_quantile": None if config.cutpoint is not None else config.quantile,
        "cutpoint": cutpoint,
        "space_covariate": suite.space_covariate,
        "interpolated": False,
    }
    result = PairResult(s1, s2, data.locations[s1], data.locations[s2], cutpoint)
    for method in config.methods:
        report = run_method(method, panel, spec, suite, level=config.level, metadata=metadata)
        report.diagnostics["positivity_flags"] = positivity.n_flagged
        if not positivity.ok:
            report.diagnostics["positivity"] = list(positivity.flags)
        result.reports[method] = report
    return result


def interpolate_failures(pairs: List[PairResult], methods: List[str]) -> int:
    """Fill failed estimates with the mean of the neighbouring pairs' estimates.

    The pair adjacent to the target has only one neighbour and stays failed.

    Returns:
        Number of estimates filled.
    """
    filled = 0
    for method in methods:
        original = [p.reports.get(method) for p in pairs]
        for k, report in enumerate(original):
            if report is None or not report.failed or k == len(pairs) - 1:
                continue
            neighbours = [
                original[j].mu_hat for j in (k - 1, k + 1)
                if 0 <= j < len(pairs) and original[j] is not None and not original[j].failed
            ]
            if not neighbours:
                continue
            value = float(np.mean(neighbours))
            pairs[k].reports[method] = replace(
                report,
                mu_hat=value,
                failed=False,
                metadata={**report.metadata, "interpolated": True},
                diagnostics={**report.diagnostics, "interpolated_from": len(neighbours)},
            )
            logger.info("%s at %.1f/%.1f km interpolated: %.4f", method, pairs[k].s1_km, pairs[k].s2_km, value)
            filled += 1
    return filled


def run_analysis(data: PanelDataset, config: AnalysisConfig) -> AnalysisResult:
    """Estimate the nutrient's effect for every adjacent pair upstream of the target.

    Args:
        data: Panel loaded with config.schema().
        config: Analysis configuration.

    Returns:
        AnalysisResult with one PairResult per pair.
    """
    if not data.has(config.nutrient):
        raise SchemaError(f"nutrient '{config.nutrient}' missing from the input")
    data = replace(data, exposure=config.nutrient)
    target = resolve_target(data, config.target_km)
    data, log, excluded = prepare_panel(data, config, target)
    suite = build_suite(config)

    pairs = []
    for s1 in range(target - 1):
        logger.info("Pair %.1f/%.1f km -> %.1f km", data.locations[s1], data.locations[s1 + 1],
                    data.locations[target])
        pairs.append(estimate_pair(data, s1, target, config, suite))

    if config.interpolate:
        interpolate_failures(pairs, list(config.methods))
    return AnalysisResult(
        pairs=pairs,
        config=config,
        target_km=data.locations[target],
        excluded_years=excluded,
        imputation=log,
        suite=suite_summary(suite),
    )


def analyze_csv(path: Union[str, Path], config: AnalysisConfig) -> AnalysisResult:
    """Load a panel CSV with the configured columns and run the analysis."""
    return run_analysis(load_csv(path, config.schema()), config)
