"""
Configuration of the structural data-generating process for simulated
river panels.
"""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Tuple, Union

import yaml


@dataclass
class DgpConfig:
    """Coefficients of the three-location structural equations.

    Locations 1 and 2 carry the exposure; location 3 is the outcome site.
    Month 0 is a pre-exposure baseline, months 1..n_t follow the equations
    below in causal order (expit = inverse logit, N(mean, sd)):

        L11t ~ N(l11_intercept + l11_lag·L11,t-1, l11_sd)
        A1t  ~ Bern(expit(a1_intercept + a1_l11·L11t + a1_lag·A1,t-1))
        L12t ~ N(l12_intercept + l12_l11_lag·L11,t-1, l12_sd)
        L22t ~ N(l22_intercept + l22_l12·L12t + l22_lag·L22,t-1 + l22_a1·A1t, l22_sd)
        A2t  ~ Bern(expit(a2_intercept + a2_l12·L12t + a2_l22·L22t + a2_a1·A1t + a2_lag·A2,t-1))
        Y3t  ~ N(y_intercept + y_a2·A2t + y_a1·A1t + y_l12·L12t + y_l22·L22t + y_lag·Y3,t-1, y_sd)

    Attributes:
        n_t: Months after the baseline month.
        locations_km: River distance of the three locations, upstream first.
        first_year: Label of the first simulated year.
    """

    # baseline (month 0)
    l11_0_mean: float = 21.5
    l11_0_sd: float = 2.5
    l22_0_mean: float = -2.8
    l22_0_sd: float = 0.7
    a_0_prob: float = 0.1
    y_0_mean: float = 2.25
    y_0_sd: float = 1.25

    l11_intercept: float = 23.0
    l11_lag: float = 0.2
    l11_sd: float = 2.0

    a1_intercept: float = -2.5
    a1_l11: float = 0.09
    a1_lag: float = 0.025

    l12_intercept: float = 6.75
    l12_l11_lag: float = 0.75
    l12_sd: float = 1.0

    l22_intercept: float = 2.0
    l22_l12: float = -0.04
    l22_lag: float = 0.04
    l22_a1: float = 0.3
    l22_sd: float = 0.25

    a2_intercept: float = -2.5
    a2_l12: float = 0.09
    a2_l22: float = 0.1
    a2_a1: float = 0.05
    a2_lag: float = 0.025

    y_intercept: float = -5.0
    y_a2: float = 1.0
    y_a1: float = 0.5
    y_l12: float = 0.025
    y_l22: float = 0.5
    y_lag: float = 0.35
    y_sd: float = 1.0

    n_t: int = 3
    locations_km: Tuple[float, float, float] = field(default_factory=lambda: (30.0, 20.0, 10.0))
    first_year: int = 1

    def __post_init__(self) -> None:
        """Validate configuration parameters."""
        for f in fields(self):
            if f.name.endswith("_sd") and getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if not 0.0 <= self.a_0_prob <= 1.0:
            raise ValueError(f"a_0_prob must be in [0, 1], got {self.a_0_prob}")
        if self.n_t < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")
        self.locations_km = tuple(float(s) for s in self.locations_km)
        if len(self.locations_km) != 3:
            raise ValueError(f"locations_km must list 3 locations, got {self.locations_km}")
        if any(b >= a for a, b in zip(self.locations_km, self.locations_km[1:])):
            raise ValueError(f"locations_km must be strictly descending, got {self.locations_km}")

    @property
    def months(self) -> Tuple[int, ...]:
        return tuple(range(self.n_t + 1))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["locations_km"] = list(self.locations_km)
        return data

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "DgpConfig":
        """Load configuration from a YAML file.

        Args:
            path: Path to the YAML configuration file.

        Returns:
            DgpConfig with values from the file; unknown keys are ignored.

        Raises:
            FileNotFoundError: If the file does not exist.
            yaml.YAMLError: If the file is not valid YAML.
            ValueError: If configuration values are invalid.
        """
        path = Path(path)
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}

        valid_fields = {field.name for field in fields(cls)}
        filtered_data = {k: v for k, v in data.items() if k in valid_fields}

        return cls(**filtered_data)

    def to_yaml(self, path: Union[str, Path]) -> None:
        """Save configuration to a YAML file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, 'w', encoding='utf-8') as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, allow_unicode=True, sort_keys=False)
