"""
Design-matrix construction for ModelSpecs over a PanelDataset.

Rows are (year, month) cells at the model's anchor location, ordered
year-major then month. Row masks are (m, n_months) boolean grids so several
models can be fit on a common set of rows.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.panel import PanelDataset
from src.errors import EmptyDataError, MissingDataError, SpecError
from src.models.spec import ModelSpec, TermKey, TermSpec, as_term

logger = logging.getLogger(__name__)

INTERCEPT = "Intercept"


def anchor_index(data: PanelDataset, spec: ModelSpec) -> int:
    s = spec.location if spec.location >= 0 else data.n_s + spec.location
    if not 0 <= s < data.n_s:
        raise SpecError(f"model anchor location {spec.location} is outside a grid of {data.n_s} locations")
    return s


def month_indices(data: PanelDataset, spec: ModelSpec, months: Optional[Sequence[int]] = None) -> np.ndarray:
    labels = months if months is not None else spec.months
    if labels is None:
        labels = data.analysis_months
    return np.array([data.month_index(t) for t in labels], dtype=int)


def term_grid(data: PanelDataset, term: TermSpec, anchor: int, month_idx: np.ndarray) -> np.ndarray:
    """Values of a plain term over (year, month) rows; NaN where missing or off the time axis."""
    loc = anchor + term.space
    if not 0 <= loc < data.n_s:
        raise SpecError(
            f"term {term.name} at anchor location {anchor} references location {loc} outside the grid"
        )
    source = data.variable(term.variable)[:, loc, :]
    idx = month_idx + term.time
    valid = idx >= 0
    out = np.full((data.m, len(month_idx)), np.nan)
    out[:, valid] = source[:, idx[valid]]
    if not valid.all():
        logger.debug("Term %s has no lag before month %s; those rows are dropped",
                     term.name, data.months[month_idx[~valid][0]])
    return out


def _plain_terms(spec: ModelSpec) -> Dict[TermKey, TermSpec]:
    terms: Dict[TermKey, TermSpec] = {}
    for term in spec.predictors:
        for factor in term.factors:
            terms.setdefault(factor.key, factor)
    return terms


def complete_mask(
    data: PanelDataset,
    spec: ModelSpec,
    months: Optional[Sequence[int]] = None,
    include_response: bool = True,
) -> np.ndarray:
    """(m, n_months) mask of rows where the response and every predictor factor is observed."""
    anchor = anchor_index(data, spec)
    month_idx = month_indices(data, spec, months)
    ok = np.ones((data.m, len(month_idx)), dtype=bool)
    terms = list(_plain_terms(spec).values())
    if include_response:
        terms.append(spec.response)
    for term in terms:
        ok &= ~np.isnan(term_grid(data, term, anchor, month_idx))
    mask = np.zeros((data.m, data.n_months), dtype=bool)
    mask[:, month_idx] = ok
    return mask


def complete_rows(data: PanelDataset, specs: Sequence[ModelSpec], months: Optional[Sequence[int]] = None) -> np.ndarray:
    """Rows complete for every spec; the common fit rows of a multi-model estimator."""
    mask = np.ones((data.m, data.n_months), dtype=bool)
    for spec in specs:
        mask &= complete_mask(data, spec, months)
    return mask


@dataclass(frozen=True, eq=False)
class Design:
    """Design matrix and row bookkeeping for one model.

    Attributes:
        spec: The model specification.
        X: (n, p) design matrix, intercept columns first.
        y: (n,) response (NaN allowed for prediction designs).
        weights: (n,) row weights.
        names: Column names.
        clusters: (n,) year index per row.
        times: (n,) grid month index per row.
        m: Number of clusters (years on the panel).
        n_months: Months on the panel grid.
        factors: Plain-term key -> (n,) values, used to rebuild columns.
        column_factors: Per column, the factor keys whose product forms it
            (empty for intercepts).
        month_labels: Month labels the design spans.
    """

    spec: ModelSpec
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    names: Tuple[str, ...]
    clusters: np.ndarray
    times: np.ndarray
    m: int
    n_months: int
    factors: Mapping[TermKey, np.ndarray]
    column_factors: Tuple[Tuple[TermKey, ...], ...]
    month_labels: Tuple[int, ...]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, term: Union[str, TermSpec]) -> int:
        name = as_term(term).name
        try:
            return self.names.index(name)
        except ValueError:
            raise SpecError(f"term {name} not in model {self.spec.response.name} ~ {list(self.names)}") from None

    def factor(self, term: Union[str, TermSpec]) -> np.ndarray:
        key = as_term(term).key
        if key not in self.factors:
            raise SpecError(f"term {as_term(term).name} is not a factor of model {self.spec.response.name}")
        return self.factors[key]

    def rows_mask(self) -> np.ndarray:
        mask = np.zeros((self.m, self.n_months), dtype=bool)
        mask[self.clusters, self.times] = True
        return mask

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        """Scatter per-row values onto an (m, n_months) grid, NaN elsewhere."""
        grid = np.full((self.m, self.n_months), np.nan)
        grid[self.clusters, self.times] = values
        return grid

    def with_overrides(self, overrides: Mapping[Union[str, TermSpec], Union[float, np.ndarray]]) -> np.ndarray:
        """Design matrix with some plain factors replaced (counterfactual rows).

        Interaction columns involving an overridden factor are recomputed.
        """
        replaced: Dict[TermKey, np.ndarray] = {}
        for term, value in overrides.items():
            key = as_term(term).key
            if key not in self.factors:
                raise SpecError(f"cannot override {as_term(term).name}: not a factor of the model")
            replaced[key] = np.broadcast_to(np.asarray(value, dtype=float), (self.n,))
        X = self.X.copy()
        for j, keys in enumerate(self.column_factors):
            if keys and any(k in replaced for k in keys):
                col = np.ones(self.n)
                for k in keys:
                    col = col * replaced.get(k, self.factors[k])
                X[:, j] = col
        return X


def build_design(
    data: PanelDataset,
    spec: ModelSpec,
    rows: Optional[np.ndarray] = None,
    months: Optional[Sequence[int]] = None,
    weights: Optional[np.ndarray] = None,
    for_prediction: bool = False,
) -> Design:
    """Build the design for a model.

    Args:
        data: Panel.
        spec: Model specification.
        rows: Optional (m, n_months) mask restricting the rows.
        months: Month labels overriding spec.months.
        weights: Optional (m, n_months) weight grid read at the row cells.
        for_prediction: When True the response is not required and any
            missing predictor in the requested rows raises MissingDataError;
            otherwise incomplete rows are dropped.

    Raises:
        SpecError: Offsets outside the grid or per-month intercepts with < 2 months.
        EmptyDataError: No usable rows.
        MissingDataError: Missing predictor in a prediction row.
    """
    anchor = anchor_index(data, spec)
    month_idx = month_indices(data, spec, months)
    if spec.intercept == "per_month" and len(month_idx) < 2:
        raise SpecError("per-month intercepts need at least two months")

    plain = _plain_terms(spec)
    grids = {key: term_grid(data, term, anchor, month_idx) for key, term in plain.items()}
    response = term_grid(data, spec.response, anchor, month_idx)

    scope = np.ones((data.m, len(month_idx)), dtype=bool)
    if rows is not None:
        scope &= np.asarray(rows, dtype=bool)[:, month_idx]
    weight_grid = np.ones((data.m, len(month_idx)))
    if weights is not None:
        weight_grid = np.asarray(weights, dtype=float)[:, month_idx]

    if for_prediction:
        for key, grid in grids.items():
            bad = scope & np.isnan(grid)
            if bad.any():
                i, k = (int(v[0]) for v in np.nonzero(bad))
                raise MissingDataError(
                    data.years[i], data.locations[anchor + key[1]], data.months[month_idx[k]], plain[key].name
                )
        keep = scope
    else:
        complete = ~np.isnan(response) & ~np.isnan(weight_grid)
        for grid in grids.values():
            complete &= ~np.isnan(grid)
        keep = scope & complete
        dropped = int(scope.sum() - keep.sum())
        if dropped:
            logger.debug("Model %s: %d rows dropped for missing values or lags before the grid",
                         spec.response.name, dropped)

    ii, kk = np.nonzero(keep)
    if ii.size == 0:
        raise EmptyDataError(f"model for {spec.response.name} has no usable rows")

    columns = []
    names = []
    column_factors = []
    labels = tuple(data.months[t] for t in month_idx)
    if spec.intercept == "single":
        columns.append(np.ones(ii.size))
        names.append(INTERCEPT)
        column_factors.append(())
    else:
        for k, label in enumerate(labels):
            columns.append((kk == k).astype(float))
            names.append(f"{INTERCEPT}[t={label}]")
            column_factors.append(())
    factors = {key: grid[ii, kk] for key, grid in grids.items()}
    for term in spec.predictors:
        keys = tuple(f.key for f in term.factors)
        col = np.ones(ii.size)
        for key in keys:
            col = col * factors[key]
        columns.append(col)
        names.append(term.name)
        column_factors.append(keys)

    return Design(
        spec=spec,
        X=np.column_stack(columns),
        y=response[ii, kk],
        weights=weight_grid[ii, kk],
        names=tuple(names),
        clusters=ii,
        times=month_idx[kk],
        m=data.m,
        n_months=data.n_months,
        factors=factors,
        column_factors=tuple(column_factors),
        month_labels=labels,
    )
