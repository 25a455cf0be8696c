"""
The set of working models the estimators use, and its default layout.

All models index the three-location estimand chain: location 0 is s1,
1 is s2 and 2 the target. Defaults follow the structural equations of the
simulated river: exposures depend on the local covariates and their own
lag, the space-varying covariate at s2 on the exposure just upstream, and
the outcome on both exposures, the covariates at s2 and its own lag.
"""

from dataclasses import dataclass, fields, replace
from typing import Any, Dict, List, Optional, Sequence

from src.data.panel import EXPOSURE
from src.errors import SpecError
from src.models.spec import ModelSpec, TermSpec

OUTCOME = "y"


@dataclass(frozen=True)
class ModelSuite:
    """Working models for one estimand.

    Attributes:
        outcome: Gaussian outcome model at the target (g-formula, SNM λ).
        covariate: Gaussian model of the space-varying covariate at s2.
        exposure_s1: Exposure model at s1 given the full history (weight
            denominator, SNM residuals).
        exposure_s2: Exposure model at s2 given the full history.
        numerator_s1: Exposure model at s1 given exposure history only.
        numerator_s2: Exposure model at s2 given exposure history only.
        structural: Marginal structural model (also the naive GEE).
    """

    outcome: ModelSpec
    covariate: ModelSpec
    exposure_s1: ModelSpec
    exposure_s2: ModelSpec
    numerator_s1: ModelSpec
    numerator_s2: ModelSpec
    structural: ModelSpec

    def __post_init__(self) -> None:
        anchors = {
            "outcome": 2, "covariate": 1, "exposure_s1": 0, "exposure_s2": 1,
            "numerator_s1": 0, "numerator_s2": 1, "structural": 2,
        }
        for name, position in anchors.items():
            spec = getattr(self, name)
            anchor = spec.location if spec.location >= 0 else 3 + spec.location
            if anchor != position:
                raise SpecError(f"{name} model must be anchored at chain position {position}, got {spec.location}")
        for name in ("outcome", "covariate", "structural"):
            if getattr(self, name).family != "gaussian":
                raise SpecError(f"{name} model must be gaussian")
        for name in ("exposure_s1", "exposure_s2", "numerator_s1", "numerator_s2"):
            if getattr(self, name).family != "binomial":
                raise SpecError(f"{name} model must be binomial")

    @property
    def space_covariate(self) -> str:
        return self.covariate.response.variable

    @property
    def exposure_models(self) -> List[ModelSpec]:
        return [self.exposure_s1, self.exposure_s2]

    @property
    def numerator_models(self) -> List[ModelSpec]:
        return [self.numerator_s1, self.numerator_s2]

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name).to_dict() for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base: Optional["ModelSuite"] = None) -> "ModelSuite":
        """Build a suite from model dictionaries; missing models come from base."""
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise SpecError(f"unknown models {sorted(unknown)}; valid: {sorted(names)}")
        if base is None:
            missing = names - set(data)
            if missing:
                raise SpecError(f"models missing: {sorted(missing)}")
            return cls(**{k: ModelSpec.from_dict(v) for k, v in data.items()})
        return replace(base, **{k: ModelSpec.from_dict(v) for k, v in data.items()})


def _interaction(others: Sequence[str], space: int) -> List[TermSpec]:
    if len(others) < 2:
        raise SpecError(f"an interaction needs two covariates, got {list(others)}")
    return [TermSpec(others[0], space, 0, interaction=TermSpec(others[1], space, 0))]


def default_suite(
    exposure: str = EXPOSURE,
    outcome: str = OUTCOME,
    space_covariate: str = "L2",
    other_covariates: Sequence[str] = ("L1",),
    interaction: bool = False,
    lagged_outcome: bool = True,
) -> ModelSuite:
    """Default working models.

    Args:
        exposure: Binary exposure variable.
        outcome: Outcome variable.
        space_covariate: Covariate affected by the upstream exposure.
        other_covariates: Covariates not affected by exposure (L°).
        interaction: Add the product of the first two other covariates to
            the outcome and exposure models.
        lagged_outcome: Include last month's outcome in the outcome model.
    """
    others = tuple(other_covariates)
    if space_covariate in others or space_covariate in (exposure, outcome):
        raise SpecError(f"space-varying covariate {space_covariate} must differ from the other variables")

    def local(space: int) -> List[TermSpec]:
        terms = [TermSpec(v, space, 0) for v in others]
        if interaction:
            terms += _interaction(others, space)
        return terms

    y = TermSpec(outcome)
    a = TermSpec(exposure)
    outcome_terms = [TermSpec(exposure, -1), TermSpec(exposure, -2)] + local(-1) + [TermSpec(space_covariate, -1)]
    if lagged_outcome:
        outcome_terms.append(TermSpec(outcome, 0, -1))

    covariate_terms = [TermSpec(v, 0, 0) for v in others]
    covariate_terms += [TermSpec(space_covariate, 0, -1), TermSpec(exposure, -1)]

    return ModelSuite(
        outcome=ModelSpec("gaussian", y, tuple(outcome_terms), location=2),
        covariate=ModelSpec("gaussian", TermSpec(space_covariate), tuple(covariate_terms), location=1),
        exposure_s1=ModelSpec("binomial", a, tuple(local(0) + [TermSpec(exposure, 0, -1)]), location=0),
        exposure_s2=ModelSpec(
            "binomial", a,
            tuple(local(0) + [TermSpec(space_covariate), TermSpec(exposure, -1), TermSpec(exposure, 0, -1)]),
            location=1,
        ),
        numerator_s1=ModelSpec("binomial", a, (TermSpec(exposure, 0, -1),), location=0),
        numerator_s2=ModelSpec("binomial", a, (TermSpec(exposure, -1), TermSpec(exposure, 0, -1)), location=1),
        structural=ModelSpec(
            "gaussian", y, (TermSpec(exposure, -1), TermSpec(exposure, -2)), intercept="per_month", location=2,
        ),
    )


def suite_summary(suite: ModelSuite) -> Dict[str, str]:
    """One formula string per model, for metadata."""
    out = {}
    for f in fields(suite):
        spec = getattr(suite, f.name)
        rhs = " + ".join(spec.term_names) or "1"
        out[f.name] = f"{spec.response.name}@{spec.location} ~ {rhs} [{spec.intercept}]"
    return out
