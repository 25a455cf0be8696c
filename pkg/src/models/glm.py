"""
Gaussian-linear, binomial-logistic and independence-GEE fits over panel
rows, with per-cluster (per-year) estimating-function contributions for
stacking.

Fitting is delegated to statsmodels (WLS, GLM with IRLS, GEE). The
contribution functions below re-express each fit as estimating equations
in θ so the M-estimation engine can differentiate them.

Gaussian contributions use w·x·r for the coefficients and w·(r² − σ²) for
the dispersion. These are the likelihood scores multiplied by σ² (and 2σ⁴),
a constant rescaling that leaves the sandwich and the bias-corrected
sandwich unchanged and stays finite for exact fits.
"""

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import statsmodels.api as sm
from scipy.special import expit
from statsmodels.tools import sm_exceptions

from src.data.panel import PanelDataset
from src.errors import ConvergenceError, SingularDesignError, SpecError
from src.models.design import Design, build_design
from src.models.spec import ModelSpec, TermSpec

logger = logging.getLogger(__name__)

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 25
SEPARATION_BOUND = 30.0

_SEPARATION_ERRORS = tuple(
    exc for exc in (getattr(sm_exceptions, "PerfectSeparationError", None),) if exc is not None
)


def cluster_sum(values: np.ndarray, clusters: np.ndarray, m: int) -> np.ndarray:
    """Sum row-level arrays (n, ...) into per-cluster arrays (m, ...)."""
    out = np.zeros((m,) + values.shape[1:])
    np.add.at(out, clusters, values)
    return out


def linear_contributions(design: Design, theta: np.ndarray) -> np.ndarray:
    p = design.p
    beta, sigma2 = theta[:p], theta[p]
    r = design.y - design.X @ beta
    w = design.weights
    rows = np.column_stack([design.X * (w * r)[:, None], w * (r ** 2 - sigma2)])
    return cluster_sum(rows, design.clusters, design.m)


def linear_jacobian(design: Design, theta: np.ndarray) -> np.ndarray:
    p = design.p
    beta = theta[:p]
    r = design.y - design.X @ beta
    w = design.weights
    jac = np.zeros((design.n, p + 1, p + 1))
    jac[:, :p, :p] = -np.einsum("n,ni,nj->nij", w, design.X, design.X)
    jac[:, p, :p] = -2.0 * (w * r)[:, None] * design.X
    jac[:, p, p] = -w
    return cluster_sum(jac, design.clusters, design.m)


def logistic_contributions(design: Design, theta: np.ndarray) -> np.ndarray:
    mu = expit(design.X @ theta)
    rows = design.X * (design.weights * (design.y - mu))[:, None]
    return cluster_sum(rows, design.clusters, design.m)


def logistic_jacobian(design: Design, theta: np.ndarray) -> np.ndarray:
    mu = expit(design.X @ theta)
    v = design.weights * mu * (1.0 - mu)
    jac = -np.einsum("n,ni,nj->nij", v, design.X, design.X)
    return cluster_sum(jac, design.clusters, design.m)


def gee_contributions(design: Design, theta: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    w = design.weights if weights is None else weights
    r = design.y - design.X @ theta
    rows = design.X * (w * r)[:, None]
    return cluster_sum(rows, design.clusters, design.m)


def gee_jacobian(design: Design, theta: np.ndarray) -> np.ndarray:
    jac = -np.einsum("n,ni,nj->nij", design.weights, design.X, design.X)
    return cluster_sum(jac, design.clusters, design.m)


_CONTRIBUTIONS = {
    "linear": (linear_contributions, linear_jacobian),
    "logistic": (logistic_contributions, logistic_jacobian),
    "gee": (gee_contributions, gee_jacobian),
}


@dataclass(eq=False)
class FitResult:
    """A fitted model with its per-cluster score contributions.

    Attributes:
        spec: Fitted specification.
        design: Design the model was fit on.
        kind: 'linear', 'logistic' or 'gee'.
        params: Coefficients, intercepts first then predictor order.
        dispersion: ML residual variance (linear fits only).
        scores: (m, k) contributions at the fit; k includes the dispersion
            component for linear fits.
        converged: Whether the fitting algorithm converged.
        iterations: Iteration count.
        history: Deviance of each IRLS iterate (logistic fits).
    """

    spec: ModelSpec
    design: Design
    kind: str
    params: np.ndarray
    dispersion: Optional[float] = None
    scores: np.ndarray = field(default=None, repr=False)
    converged: bool = True
    iterations: int = 1
    history: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.scores is None:
            self.scores = self.contributions(self.theta)

    @property
    def names(self) -> Tuple[str, ...]:
        return self.design.names

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        """Names of θ, the stacking parameter vector."""
        if self.kind == "linear":
            return self.names + ("sigma2",)
        return self.names

    @property
    def theta(self) -> np.ndarray:
        if self.kind == "linear":
            return np.append(self.params, self.dispersion)
        return np.asarray(self.params, dtype=float)

    def contributions(self, theta: np.ndarray) -> np.ndarray:
        return _CONTRIBUTIONS[self.kind][0](self.design, theta)

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        return _CONTRIBUTIONS[self.kind][1](self.design, theta)

    def coef(self, term: Union[str, TermSpec]) -> float:
        return float(self.params[self.design.column(term)])

    def linear_predictor(self, X: Optional[np.ndarray] = None, params: Optional[np.ndarray] = None) -> np.ndarray:
        X = self.design.X if X is None else X
        params = self.params if params is None else params
        return X @ params

    @property
    def log_likelihood_trace(self) -> Tuple[float, ...]:
        """Bernoulli log-likelihood of each IRLS iterate (weighted)."""
        return tuple(-0.5 * d for d in self.history)

    def as_series(self) -> pd.Series:
        return pd.Series(self.params, index=list(self.names), name="estimate")

    def to_frame(self) -> pd.DataFrame:
        frame = self.as_series().rename_axis("term").reset_index()
        if self.dispersion is not None:
            frame.loc[len(frame)] = ["sigma2", self.dispersion]
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def _check_rank(design: Design) -> None:
    Xw = design.X * np.sqrt(design.weights)[:, None]
    _, r, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(Xw.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < design.p:
        raise SingularDesignError([design.names[j] for j in piv[rank:]])


def _require_family(spec: ModelSpec, family: str) -> None:
    if spec.family != family:
        raise SpecError(f"expected a {family} model, got family {spec.family} for {spec.response.name}")


def fit_linear(
    data: PanelDataset,
    spec: ModelSpec,
    weights: Optional[np.ndarray] = None,
    rows: Optional[np.ndarray] = None,
    months: Optional[Sequence[int]] = None,
) -> FitResult:
    """Fit a Gaussian linear model by (weighted) least squares.

    Args:
        data: Panel.
        spec: Gaussian model specification.
        weights: Optional (m, n_months) weight grid read at the fit rows.
        rows: Optional (m, n_months) fit-row mask.
        months: Month labels overriding spec.months.

    Returns:
        FitResult with the ML dispersion Σw·r²/Σw.

    Raises:
        SingularDesignError: Rank-deficient design.
        EmptyDataError: No usable rows.
    """
    _require_family(spec, "gaussian")
    design = build_design(data, spec, rows=rows, months=months, weights=weights)
    _check_rank(design)
    result = sm.WLS(design.y, design.X, weights=design.weights).fit()
    params = np.asarray(result.params, dtype=float)
    resid = design.y - design.X @ params
    dispersion = float(np.sum(design.weights * resid ** 2) / np.sum(design.weights))
    logger.debug("Linear fit %s on %d rows: %s", spec.response.name, design.n, np.round(params, 4))
    return FitResult(spec=spec, design=design, kind="linear", params=params, dispersion=dispersion)


def fit_logistic(
    data: PanelDataset,
    spec: ModelSpec,
    weights: Optional[np.ndarray] = None,
    rows: Optional[np.ndarray] = None,
    months: Optional[Sequence[int]] = None,
) -> FitResult:
    """Fit a logistic model by IRLS (tolerance 1e-8 on coefficients, 25 iterations).

    Raises:
        ConvergenceError: No convergence, or |coefficient| > 30 (separation).
        SpecError: Response not binary.
        SingularDesignError: Rank-deficient design.
    """
    _require_family(spec, "binomial")
    design = build_design(data, spec, rows=rows, months=months, weights=weights)
    if not np.all((design.y == 0.0) | (design.y == 1.0)):
        raise SpecError(f"logistic response {spec.response.name} must be 0/1")
    _check_rank(design)

    model = sm.GLM(design.y, design.X, family=sm.families.Binomial(), var_weights=design.weights)
    try:
        with warnings.catch_warnings(), np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            warnings.simplefilter("ignore", sm_exceptions.PerfectSeparationWarning)
            warnings.simplefilter("ignore", sm_exceptions.ConvergenceWarning)
            warnings.simplefilter("ignore", RuntimeWarning)
            result = model.fit(method="IRLS", maxiter=IRLS_MAX_ITER, tol=IRLS_TOL, tol_criterion="params")
    except _SEPARATION_ERRORS as exc:
        raise ConvergenceError(f"logistic model for {spec.response.name}: separation ({exc})") from None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceError(f"logistic model for {spec.response.name} failed: {exc}") from None

    params = np.asarray(result.params, dtype=float)
    history = result.fit_history
    iterations = int(history.get("iteration", len(history["params"]) - 2))
    if not np.all(np.isfinite(params)) or np.max(np.abs(params)) > SEPARATION_BOUND:
        raise ConvergenceError(
            f"logistic model for {spec.response.name}: coefficients diverge (separation), "
            f"max |coef| = {np.max(np.abs(params)):.3g}"
        )
    if not result.converged:
        raise ConvergenceError(
            f"logistic model for {spec.response.name} did not converge in {IRLS_MAX_ITER} iterations"
        )
    deviance = tuple(float(d) for d in history["deviance"][2:])
    logger.debug("Logistic fit %s on %d rows in %d iterations", spec.response.name, design.n, iterations)
    return FitResult(
        spec=spec, design=design, kind="logistic", params=params,
        converged=True, iterations=iterations, history=deviance,
    )


def fit_gee(
    data: PanelDataset,
    spec: ModelSpec,
    weights: Optional[np.ndarray] = None,
    rows: Optional[np.ndarray] = None,
    months: Optional[Sequence[int]] = None,
) -> FitResult:
    """Gaussian GEE with an independence working correlation, clustered by year."""
    _require_family(spec, "gaussian")
    design = build_design(data, spec, rows=rows, months=months, weights=weights)
    _check_rank(design)
    model = sm.GEE(
        design.y, design.X, groups=design.clusters,
        family=sm.families.Gaussian(), cov_struct=sm.cov_struct.Independence(),
        weights=design.weights,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sm_exceptions.ConvergenceWarning)
        result = model.fit()
    params = np.asarray(result.params, dtype=float)
    fit_history = getattr(result, "fit_history", {}) or {}
    iterations = len(fit_history.get("params", ())) or 1
    return FitResult(spec=spec, design=design, kind="gee", params=params, iterations=iterations)


def predict(
    fit: FitResult,
    data: PanelDataset,
    spec: Optional[ModelSpec] = None,
    rows: Optional[np.ndarray] = None,
    overrides: Optional[Mapping[Union[str, TermSpec], float]] = None,
) -> np.ndarray:
    """Predict on an (m, n_months) grid: linear predictor or inverse-logit probability.

    Args:
        fit: Fitted model.
        data: Panel to predict on.
        spec: Specification to predict with; must have the fitted predictor
            structure. Defaults to the fitted spec.
        rows: Optional (m, n_months) mask of requested rows; defaults to all
            rows of the fitted months.
        overrides: Plain terms set to fixed values (counterfactual predictions).

    Returns:
        Grid of predictions, NaN outside the requested rows.

    Raises:
        SpecError: Predictor structure differs from the fit.
        MissingDataError: A requested row has a missing predictor.
    """
    spec = spec or fit.spec
    if spec.term_names != fit.spec.term_names or spec.intercept != fit.spec.intercept:
        raise SpecError(
            f"prediction spec {list(spec.term_names)} does not match fitted spec {list(fit.spec.term_names)}"
        )
    design = build_design(data, spec, rows=rows, months=fit.design.month_labels, for_prediction=True)
    X = design.with_overrides(overrides) if overrides else design.X
    eta = X @ fit.params
    values = expit(eta) if spec.family == "binomial" else eta
    return design.to_grid(values)
