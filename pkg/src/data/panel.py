"""
Panel data model and CSV ingestion for space-time causal analyses.

A panel is a rectangular year x location x month grid. Each variable is held
as one float array of shape (m, n_s, n_months) with NaN marking missing
cells, so histories are plain array views rather than copies.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import DuplicateKeyError, PanelParseError, PanelValueError, SchemaError

if TYPE_CHECKING:
    from src.data.preprocess import CutpointRule

logger = logging.getLogger(__name__)

# Name of the binary exposure variable produced by discretization.
EXPOSURE = "a"

MISSING_TOKENS = ("", "NA", "NaN", "nan", "N/A")


@dataclass(frozen=True)
class Observation:
    """One (year, location, month) cell. None marks a missing value."""

    y: Optional[float]
    a_raw: Optional[float]
    a: Optional[float]
    covariates: Dict[str, Optional[float]] = field(default_factory=dict)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for panel CSV files.

    Attributes:
        year: Integer year column (the replicate / cluster).
        location: Real column with river distance upstream (km). Larger
            distances are further upstream.
        month: Integer month column.
        outcome: Outcome column.
        outcome_transform: 'log2' to log2-transform the outcome on load
            (chlorophyll), 'none' when the column already holds the outcome
            (simulated data).
        exposure: Optional raw (continuous) exposure column.
        covariates: Covariate columns.
        binary_exposure: Optional column holding an already discretized 0/1
            exposure, loaded as variable 'a'.
        site: Optional site-name column, used to detect distance ties.
        baseline_month: Month label of a pre-exposure baseline month, if the
            file has one (simulated data use month 0).
    """

    year: str = "year"
    location: str = "location_km"
    month: str = "month"
    outcome: str = "chla"
    outcome_transform: str = "log2"
    exposure: Optional[str] = None
    covariates: Tuple[str, ...] = ()
    binary_exposure: Optional[str] = None
    site: Optional[str] = None
    baseline_month: Optional[int] = None

    def __post_init__(self) -> None:
        if self.outcome_transform not in ("log2", "none"):
            raise ValueError(f"outcome_transform must be 'log2' or 'none', got {self.outcome_transform}")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def measurement_columns(self) -> Tuple[str, ...]:
        cols = [self.outcome]
        for name in (self.exposure, self.binary_exposure):
            if name is not None:
                cols.append(name)
        cols.extend(c for c in self.covariates if c not in cols)
        return tuple(cols)

    @classmethod
    def from_dict(cls, data: Mapping) -> "CsvSchema":
        data = dict(data)
        if "covariates" in data and data["covariates"] is not None:
            data["covariates"] = tuple(data["covariates"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Rectangular year x location x month panel.

    Attributes:
        years: Year labels, ascending. Each year is one independent cluster.
        locations: River distance (km) per location, strictly descending so
            index 0 is the most upstream site.
        months: Month labels in time order.
        values: Variable name -> array of shape (m, n_s, n_months), NaN = missing.
        outcome: Name of the outcome variable (log2 scale).
        exposure: Name of the raw continuous exposure variable, if any.
        covariates: Registered covariate names.
        baseline: True when months[0] is a pre-exposure baseline month.
        cutpoint_rule: Resolved rule used to build variable 'a', if any.
        site_names: Optional site label per location.
    """

    years: Tuple[int, ...]
    locations: Tuple[float, ...]
    months: Tuple[int, ...]
    values: Mapping[str, np.ndarray]
    outcome: str = "y"
    exposure: Optional[str] = None
    covariates: Tuple[str, ...] = ()
    baseline: bool = False
    cutpoint_rule: Optional["CutpointRule"] = None
    site_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        years = tuple(int(y) for y in self.years)
        locations = tuple(float(s) for s in self.locations)
        months = tuple(int(t) for t in self.months)
        if not years or not locations or not months:
            raise PanelValueError("panel must have at least one year, location and month")
        if len(set(years)) != len(years):
            raise DuplicateKeyError(f"duplicate years in panel: {years}")
        if any(b >= a for a, b in zip(locations, locations[1:])):
            raise SchemaError(
                f"locations must be strictly descending in distance (upstream first), got {locations}"
            )
        shape = (len(years), len(locations), len(months))
        frozen = {}
        for name, arr in self.values.items():
            arr = np.array(arr, dtype=float, copy=True)
            if arr.shape != shape:
                raise PanelValueError(f"variable '{name}' has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            frozen[name] = arr
        if EXPOSURE in frozen:
            a = frozen[EXPOSURE]
            observed = a[~np.isnan(a)]
            if not np.all((observed == 0.0) | (observed == 1.0)):
                raise PanelValueError("discretized exposure 'a' must be exactly 0 or 1")
        if self.outcome not in frozen:
            raise SchemaError(f"outcome variable '{self.outcome}' not present in panel")
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "values", frozen)
        object.__setattr__(self, "covariates", tuple(self.covariates))

    # --- shape -------------------------------------------------------------

    @property
    def m(self) -> int:
        return len(self.years)

    @property
    def n_s(self) -> int:
        return len(self.locations)

    @property
    def n_months(self) -> int:
        """Months on the grid, baseline included."""
        return len(self.months)

    @property
    def n_t(self) -> int:
        """Analysis months (baseline excluded)."""
        return self.n_months - int(self.baseline)

    @property
    def analysis_months(self) -> Tuple[int, ...]:
        return self.months[1:] if self.baseline else self.months

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(self.values)

    # --- lookup ------------------------------------------------------------

    def has(self, name: str) -> bool:
        return name in self.values

    def variable(self, name: str) -> np.ndarray:
        """Return the (read-only) array of a variable."""
        try:
            return self.values[name]
        except KeyError:
            raise SchemaError(f"variable '{name}' is not registered; available: {sorted(self.values)}") from None

    def month_index(self, month: int) -> int:
        try:
            return self.months.index(int(month))
        except ValueError:
            raise SchemaError(f"month {month} not on the grid {self.months}") from None

    def location_index(self, km: float) -> int:
        matches = [k for k, s in enumerate(self.locations) if np.isclose(s, km)]
        if not matches:
            raise SchemaError(f"location {km} km not on the grid {self.locations}")
        return matches[0]

    def observation(self, i: int, s: int, t: int) -> Observation:
        def read(name: Optional[str]) -> Optional[float]:
            if name is None or name not in self.values:
                return None
            v = self.values[name][i, s, t]
            return None if np.isnan(v) else float(v)

        return Observation(
            y=read(self.outcome),
            a_raw=read(self.exposure),
            a=read(EXPOSURE),
            covariates={c: read(c) for c in self.covariates},
        )

    # --- derived panels ----------------------------------------------------

    def with_values(self, **arrays: np.ndarray) -> "PanelDataset":
        """Return a copy with variables added or replaced."""
        values = dict(self.values)
        values.update(arrays)
        return replace(self, values=values)

    def select_locations(self, indices: Sequence[int]) -> "PanelDataset":
        """Return the sub-panel restricted to the given location indices (kept in upstream order)."""
        idx = sorted(int(k) for k in indices)
        if len(set(idx)) != len(idx):
            raise SchemaError(f"duplicate location indices: {indices}")
        names = None if self.site_names is None else tuple(self.site_names[k] for k in idx)
        return replace(
            self,
            locations=tuple(self.locations[k] for k in idx),
            values={name: arr[:, idx, :] for name, arr in self.values.items()},
            site_names=names,
        )

    def select_years(self, mask: Union[np.ndarray, Sequence[bool]]) -> "PanelDataset":
        """Return the sub-panel of years where mask is True."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise PanelValueError("year selection is empty")
        return replace(
            self,
            years=tuple(y for y, keep in zip(self.years, mask) if keep),
            values={name: arr[mask] for name, arr in self.values.items()},
        )

    def drop_years(self, years: Iterable[int]) -> "PanelDataset":
        drop = {int(y) for y in years}
        return self.select_years([y not in drop for y in self.years])

    # --- export ------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        """Long-format frame: one row per cell, one column per variable."""
        yy, ss, tt = np.meshgrid(
            np.asarray(self.years), np.asarray(self.locations), np.asarray(self.months), indexing="ij"
        )
        frame = pd.DataFrame({
            "year": yy.ravel(),
            "location_km": ss.ravel(),
            "month": tt.ravel(),
        })
        if self.site_names is not None:
            sites = np.broadcast_to(np.asarray(self.site_names)[None, :, None], yy.shape)
            frame["site"] = sites.ravel()
        for name, arr in self.values.items():
            frame[name] = arr.ravel()
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, na_rep="NA")
        return path


def _parse_numeric(raw: pd.DataFrame, column: str, integer: bool = False, required: bool = False) -> np.ndarray:
    text = raw[column].fillna("").astype(str).str.strip()
    missing = text.isin(MISSING_TOKENS)
    values = pd.to_numeric(text.where(~missing), errors="coerce")
    bad = values.isna() & ~missing
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise PanelParseError(f"column '{column}': cannot parse {text.iloc[row]!r} as a number", row=row + 1)
    if required and missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise PanelParseError(f"column '{column}' is required but missing", row=row + 1)
    out = values.to_numpy(dtype=float)
    if integer:
        finite = out[~np.isnan(out)]
        if np.any(finite != np.round(finite)):
            row = int(np.flatnonzero((out != np.round(out)) & ~np.isnan(out))[0])
            raise PanelParseError(f"column '{column}' must hold integers", row=row + 1)
    return out


def load_csv(path: Union[str, Path], schema: Optional[CsvSchema] = None) -> PanelDataset:
    """Load a long-format panel CSV into a rectangular PanelDataset.

    Cells absent from the file become missing. Locations are ordered by
    distance descending (upstream first); months span min..max of the file.

    Args:
        path: CSV file with a header row.
        schema: Column mapping. Defaults to CsvSchema().

    Returns:
        PanelDataset with the outcome registered as 'y'.

    Raises:
        FileNotFoundError: If the file does not exist.
        PanelParseError: Empty file, no data rows or an unparsable value.
        SchemaError: Missing required columns or two sites at one distance.
        DuplicateKeyError: A (year, location, month) key appears twice.
        PanelValueError: Non-positive outcome before the log2 transform.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Panel file not found: {path}")

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise PanelParseError("file is empty") from None
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise PanelParseError(f"malformed row: {exc}", row=row) from None

    required = [schema.year, schema.location, schema.month, *schema.measurement_columns]
    if schema.site is not None:
        required.append(schema.site)
    absent = [c for c in required if c not in raw.columns]
    if absent:
        raise SchemaError(f"missing required columns: {absent}")
    if raw.empty:
        raise PanelParseError("file has a header but no data rows")

    year = _parse_numeric(raw, schema.year, integer=True, required=True).astype(int)
    location = _parse_numeric(raw, schema.location, required=True)
    month = _parse_numeric(raw, schema.month, integer=True, required=True).astype(int)

    keys = pd.DataFrame({"year": year, "location": location, "month": month})
    dup = keys.duplicated(keep="first").to_numpy()
    if dup.any():
        row = int(np.flatnonzero(dup)[0])
        raise DuplicateKeyError(
            f"row {row + 1}: duplicate key (year={year[row]}, location={location[row]}, month={month[row]})"
        )

    site_names = None
    if schema.site is not None:
        sites = raw[schema.site].astype(str).str.strip()
        per_km = pd.DataFrame({"km": location, "site": sites}).groupby("km")["site"].nunique()
        tied = per_km[per_km > 1]
        if not tied.empty:
            raise SchemaError(f"distinct sites share a river distance: {list(tied.index)}")

    years = tuple(sorted(set(year.tolist())))
    locations = tuple(sorted(set(location.tolist()), reverse=True))
    months = tuple(range(int(month.min()), int(month.max()) + 1))
    if schema.site is not None:
        first = pd.DataFrame({"km": location, "site": sites}).drop_duplicates("km").set_index("km")["site"]
        site_names = tuple(str(first[km]) for km in locations)

    yi = pd.Index(years).get_indexer(year)
    si = pd.Index(locations).get_indexer(location)
    ti = pd.Index(months).get_indexer(month)
    shape = (len(years), len(locations), len(months))

    def grid(column_values: np.ndarray) -> np.ndarray:
        arr = np.full(shape, np.nan)
        arr[yi, si, ti] = column_values
        return arr

    values: Dict[str, np.ndarray] = {}
    outcome_raw = _parse_numeric(raw, schema.outcome)
    if schema.outcome_transform == "log2":
        nonpositive = ~np.isnan(outcome_raw) & (outcome_raw <= 0)
        if nonpositive.any():
            row = int(np.flatnonzero(nonpositive)[0])
            raise PanelValueError(
                f"row {row + 1}: outcome '{schema.outcome}' must be positive before log2, got {outcome_raw[row]}"
            )
        values[schema.outcome] = grid(outcome_raw)
        values["y"] = grid(np.log2(outcome_raw))
    else:
        values["y"] = grid(outcome_raw)

    for name in schema.measurement_columns[1:]:
        target = EXPOSURE if name == schema.binary_exposure else name
        values[target] = grid(_parse_numeric(raw, name))

    baseline = False
    if schema.baseline_month is not None:
        if int(schema.baseline_month) != months[0]:
            raise SchemaError(
                f"baseline_month {schema.baseline_month} must be the first month on the grid ({months[0]})"
            )
        baseline = True

    n_missing_cells = int(np.prod(shape)) - len(raw)
    if n_missing_cells:
        logger.info("Panel %s: %d grid cells absent from file, marked missing", path.name, n_missing_cells)
    logger.debug("Loaded panel %s: m=%d, n_s=%d, months=%s", path.name, *shape[:2], months)

    return PanelDataset(
        years=years,
        locations=locations,
        months=months,
        values=values,
        outcome="y",
        exposure=schema.exposure,
        covariates=tuple(schema.covariates),
        baseline=baseline,
        site_names=site_names,
    )
