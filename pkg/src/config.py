"""
Central configuration for simulation studies and river analyses.
"""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

import yaml

from src.data.panel import CsvSchema
from src.data.preprocess import ALLOWED_QUANTILES
from src.gmethods.base import METHODS
from src.inference.wald import DISTRIBUTIONS, select_variants

T = TypeVar("T")


def _load_yaml(cls: Type[T], path: Union[str, Path]) -> T:
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}

    # Filter to only valid fields
    valid_fields = {field.name for field in fields(cls)}
    filtered_data = {k: v for k, v in data.items() if k in valid_fields}

    return cls(**filtered_data)


def _dump_yaml(data: Dict[str, Any], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, 'w', encoding='utf-8') as f:
        yaml.dump(data, f, default_flow_style=False, allow_unicode=True, sort_keys=False)


def _check_methods(methods: List[str]) -> None:
    if not methods:
        raise ValueError(f"methods must be non-empty; valid methods: {', '.join(METHODS)}")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; valid methods: {', '.join(METHODS)}")


def _check_ci(level: float, b: Union[str, float], dist: str) -> None:
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if dist not in ("all",) + DISTRIBUTIONS:
        raise ValueError(f"dist must be one of {('all',) + DISTRIBUTIONS}, got {dist}")
    select_variants(b, dist)


@dataclass
class StudyConfig:
    """Configuration of a simulation study.

    Attributes:
        m_values: Numbers of years per simulated dataset.
        replicates: Datasets per m.
        base_seed: Seed every replicate stream is derived from.
        methods: Estimators to run.
        level: Confidence level.
        b: Bias-correction constant(s) to report: 'all', 'uncorrected' or 0.1/0.3/0.75.
        dist: Reference distribution(s): 'all', 'normal' or 't'.
        workers: Worker processes; 1 runs serially.
    """

    m_values: List[int] = field(default_factory=lambda: [10, 15, 20, 25, 30])
    replicates: int = 2000
    base_seed: int = 20240101
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    level: float = 0.90
    b: Union[str, float] = "all"
    dist: str = "all"
    workers: int = 1

    def __post_init__(self) -> None:
        """Validate configuration parameters."""
        self.m_values = [int(m) for m in self.m_values]
        self.methods = list(self.methods)
        if not self.m_values:
            raise ValueError("m_values must be non-empty")
        if any(m < 2 for m in self.m_values):
            raise ValueError(f"m_values must all be >= 2, got {self.m_values}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        _check_methods(self.methods)
        _check_ci(self.level, self.b, self.dist)

    @property
    def variants(self):
        return select_variants(self.b, self.dist)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "StudyConfig":
        """Load configuration from a YAML file; unknown keys are ignored.

        Raises:
            FileNotFoundError: If the file does not exist.
            yaml.YAMLError: If the file is not valid YAML.
            ValueError: If configuration values are invalid.
        """
        return _load_yaml(cls, path)

    def to_yaml(self, path: Union[str, Path]) -> None:
        _dump_yaml(asdict(self), path)


@dataclass
class AnalysisConfig:
    """Configuration of a river analysis.

    Attributes:
        year_column: Year column of the input CSV.
        location_column: River distance column (km upstream of the outcome site).
        month_column: Month column.
        site_column: Optional site-name column.
        outcome_column: Outcome column (chlorophyll a).
        outcome_transform: 'log2' or 'none'.
        nutrients: Nutrient columns; screening runs over all of them.
        nutrient: Exposure nutrient of the analysis.
        space_covariate: Space-varying covariate; None picks it from
            space_covariate_by_nutrient.
        space_covariate_by_nutrient: Default space-varying covariate per nutrient.
        other_covariates: Covariates unaffected by the exposure.
        quantile: Cutpoint quantile (0.25, 0.5 or 0.75).
        cutpoint: Fixed cutpoint overriding the quantile.
        probe_months: Months pooled for the cutpoint quantile.
        probe_years: Years pooled for the cutpoint quantile; None = all.
        months: Months μ is averaged over; None = every month on the grid.
        target_km: Outcome site; None = the most downstream location.
        interaction: Add the product of the first two other covariates.
        lagged_outcome: Include last month's outcome in the outcome model.
        impute: Run simple sequential imputation before estimation.
        interpolate: Fill failed estimates from neighbouring pairs.
        methods: Estimators to run.
        level: Confidence level.
        b: Bias-correction constant(s) to report.
        dist: Reference distribution(s) to report.
        models: Optional model overrides by suite name (ModelSpec dictionaries).
    """

    year_column: str = "year"
    location_column: str = "location_km"
    month_column: str = "month"
    site_column: Optional[str] = None
    outcome_column: str = "chla"
    outcome_transform: str = "log2"
    nutrients: List[str] = field(default_factory=lambda: ["nh3", "no3", "tkn", "p"])
    nutrient: str = "no3"
    space_covariate: Optional[str] = None
    space_covariate_by_nutrient: Dict[str, str] = field(
        default_factory=lambda: {"nh3": "p", "no3": "p", "tkn": "p", "p": "nh3"}
    )
    other_covariates: List[str] = field(default_factory=lambda: ["temp", "flow"])
    quantile: float = 0.5
    cutpoint: Optional[float] = None
    probe_months: Optional[List[int]] = None
    probe_years: Optional[List[int]] = None
    months: Optional[List[int]] = None
    target_km: Optional[float] = None
    interaction: bool = False
    lagged_outcome: bool = True
    impute: bool = True
    interpolate: bool = False
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    level: float = 0.90
    b: Union[str, float] = "all"
    dist: str = "all"
    models: Optional[Dict[str, Any]] = None

    def __post_init__(self) -> None:
        """Validate configuration parameters."""
        if self.outcome_transform not in ("log2", "none"):
            raise ValueError(f"outcome_transform must be 'log2' or 'none', got {self.outcome_transform}")
        if self.cutpoint is None and not any(abs(self.quantile - q) < 1e-12 for q in ALLOWED_QUANTILES):
            raise ValueError(f"quantile must be one of {ALLOWED_QUANTILES}, got {self.quantile}")
        if not self.nutrient:
            raise ValueError("nutrient must be named")
        if self.interaction and len(self.other_covariates) < 2:
            raise ValueError(f"interaction needs two other covariates, got {self.other_covariates}")
        space = self.resolved_space_covariate
        if space == self.nutrient or space in self.other_covariates:
            raise ValueError(
                f"space_covariate must differ from the exposure and the other covariates, got {space}"
            )
        self.methods = list(self.methods)
        _check_methods(self.methods)
        _check_ci(self.level, self.b, self.dist)

    @property
    def resolved_space_covariate(self) -> str:
        if self.space_covariate:
            return self.space_covariate
        if self.nutrient in self.space_covariate_by_nutrient:
            return self.space_covariate_by_nutrient[self.nutrient]
        others = [n for n in self.nutrients if n != self.nutrient]
        if not others:
            raise ValueError(f"no space-varying covariate configured for nutrient {self.nutrient}")
        return others[0]

    @property
    def variants(self):
        return select_variants(self.b, self.dist)

    @property
    def covariate_columns(self) -> Tuple[str, ...]:
        """Measured columns the analysis loads besides the outcome."""
        columns: List[str] = []
        for name in [*self.nutrients, self.nutrient, self.resolved_space_covariate, *self.other_covariates]:
            if name not in columns:
                columns.append(name)
        return tuple(columns)

    def schema(self) -> CsvSchema:
        return CsvSchema(
            year=self.year_column,
            location=self.location_column,
            month=self.month_column,
            outcome=self.outcome_column,
            outcome_transform=self.outcome_transform,
            covariates=self.covariate_columns,
            site=self.site_column,
        )

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "AnalysisConfig":
        """Load configuration from a YAML file; unknown keys are ignored.

        Raises:
            FileNotFoundError: If the file does not exist.
            yaml.YAMLError: If the file is not valid YAML.
            ValueError: If configuration values are invalid.
        """
        return _load_yaml(cls, path)

    def to_yaml(self, path: Union[str, Path]) -> None:
        _dump_yaml(asdict(self), path)
