"""
Declarative regression model specifications over panel variables.

A TermSpec names a variable read at a space/time offset from the row's
anchor cell; a ModelSpec combines a response, ordered predictor terms and an
intercept structure. Both serialize to JSON-shaped dictionaries, and terms
also accept the compact text form used in YAML configs, e.g. "a[s-1,t]" or
"temp:flow".
"""

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

from src.errors import SpecError

FAMILIES = ("gaussian", "binomial")
INTERCEPTS = ("single", "per_month")

_TERM_PATTERN = re.compile(r"^\s*(\w+)\s*(?:\[\s*s\s*(-\d+)?\s*,\s*t\s*(-1)?\s*\])?\s*$")

TermKey = Tuple[str, int, int]


@dataclass(frozen=True)
class TermSpec:
    """A variable read at (anchor location + space, anchor month + time).

    Attributes:
        variable: Panel variable name.
        space: Location offset, 0 or negative (upstream along the grid).
        time: Month offset, 0 or -1.
        interaction: Optional partner term; the column is the product.
    """

    variable: str
    space: int = 0
    time: int = 0
    interaction: Optional["TermSpec"] = None

    def __post_init__(self) -> None:
        if not self.variable:
            raise SpecError("term variable must be non-empty")
        if int(self.space) != self.space or self.space > 0:
            raise SpecError(f"space offset must be a non-positive integer, got {self.space}")
        if self.time not in (0, -1):
            raise SpecError(f"time offset must be 0 or -1, got {self.time}")
        if self.interaction is not None and self.interaction.interaction is not None:
            raise SpecError("interactions are limited to two factors")
        object.__setattr__(self, "space", int(self.space))

    @property
    def key(self) -> TermKey:
        return (self.variable, self.space, self.time)

    @property
    def factors(self) -> Tuple["TermSpec", ...]:
        """Main-effect factors of the term (one, or two for an interaction)."""
        if self.interaction is None:
            return (self,)
        return (replace(self, interaction=None), self.interaction)

    @property
    def name(self) -> str:
        if self.interaction is not None:
            return ":".join(f.name for f in self.factors)
        if self.space == 0 and self.time == 0:
            return self.variable
        space = "s" if self.space == 0 else f"s{self.space}"
        time = "t" if self.time == 0 else f"t{self.time}"
        return f"{self.variable}[{space},{time}]"

    def __str__(self) -> str:
        return self.name

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"variable": self.variable, "space": self.space, "time": self.time}
        if self.interaction is not None:
            out["interaction"] = self.interaction.to_dict()
        return out

    @classmethod
    def parse(cls, text: str) -> "TermSpec":
        """Parse the compact form: 'var', 'var[s-1,t]', 'var[s,t-1]', 'x:z'."""
        parts = text.split(":")
        if len(parts) > 2:
            raise SpecError(f"interactions are limited to two factors: {text!r}")
        terms = []
        for part in parts:
            match = _TERM_PATTERN.match(part)
            if match is None:
                raise SpecError(f"cannot parse term {part!r}")
            variable, space, time = match.groups()
            terms.append(cls(variable, int(space or 0), int(time or 0)))
        if len(terms) == 2:
            return replace(terms[0], interaction=terms[1])
        return terms[0]

    @classmethod
    def from_dict(cls, data: Union[str, Dict[str, Any], "TermSpec"]) -> "TermSpec":
        if isinstance(data, TermSpec):
            return data
        if isinstance(data, str):
            return cls.parse(data)
        interaction = data.get("interaction")
        return cls(
            variable=data["variable"],
            space=int(data.get("space", 0)),
            time=int(data.get("time", 0)),
            interaction=None if interaction is None else cls.from_dict(interaction),
        )


def as_term(term: Union[str, TermSpec]) -> TermSpec:
    return TermSpec.from_dict(term)


@dataclass(frozen=True)
class ModelSpec:
    """A GLM over panel rows anchored at one location.

    Attributes:
        family: 'gaussian' or 'binomial'.
        response: Response term (read at the anchor cell).
        predictors: Ordered predictor terms.
        intercept: 'single' or 'per_month' (one intercept per month).
        location: Grid index of the anchor location; negative values count
            from the downstream end. Estimators index the estimand chain
            (0 = s1, 1 = s2, 2 = s*).
        months: Month labels the model is fit on; None = the caller's
            analysis months.
    """

    family: str
    response: TermSpec
    predictors: Tuple[TermSpec, ...] = ()
    intercept: str = "single"
    location: int = -1
    months: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise SpecError(f"family must be one of {FAMILIES}, got {self.family}")
        if self.intercept not in INTERCEPTS:
            raise SpecError(f"intercept must be one of {INTERCEPTS}, got {self.intercept}")
        response = as_term(self.response)
        if response.interaction is not None or response.space != 0 or response.time != 0:
            raise SpecError(f"response must be a plain term at the anchor cell, got {response.name}")
        predictors = tuple(as_term(p) for p in self.predictors)
        names = [p.name for p in predictors]
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated:
            raise SpecError(f"duplicate predictor terms: {duplicated}")
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "predictors", predictors)
        object.__setattr__(self, "location", int(self.location))
        if self.months is not None:
            object.__setattr__(self, "months", tuple(int(t) for t in self.months))

    @property
    def term_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.predictors)

    def has_term(self, term: Union[str, TermSpec]) -> bool:
        return as_term(term).name in self.term_names

    def with_predictors(self, predictors: Iterable[Union[str, TermSpec]]) -> "ModelSpec":
        return replace(self, predictors=tuple(as_term(p) for p in predictors))

    def without(self, *terms: Union[str, TermSpec]) -> "ModelSpec":
        """Copy with the named predictors (and interactions involving them) removed."""
        drop = {as_term(t).name for t in terms}
        kept = [p for p in self.predictors if not ({f.name for f in p.factors} | {p.name}) & drop]
        return replace(self, predictors=tuple(kept))

    def adding(self, *terms: Union[str, TermSpec]) -> "ModelSpec":
        extra = [as_term(t) for t in terms if not self.has_term(t)]
        return replace(self, predictors=self.predictors + tuple(extra))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "response": self.response.to_dict(),
            "terms": [p.to_dict() for p in self.predictors],
            "intercept": self.intercept,
            "location": self.location,
            "months": None if self.months is None else list(self.months),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        terms: Sequence = data.get("terms", data.get("predictors", ()))
        months = data.get("months")
        return cls(
            family=data["family"],
            response=TermSpec.from_dict(data["response"]),
            predictors=tuple(TermSpec.from_dict(t) for t in terms),
            intercept=data.get("intercept", "single"),
            location=int(data.get("location", -1)),
            months=None if months is None else tuple(months),
        )

    def to_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
