"""
Structural nested mean model for the two exposure blips, solved in closed
form by g-estimation.

The outcome with the s2 blip removed, U0 = Y − β1·A(s2), is mean
independent of A(s2) given the history; with both blips removed,
U1 = Y − β1·A(s2) − β2·A(s1) is mean independent of A(s1). The estimating
equations pair exposure residuals (A − fitted propensity) with outcome
residuals (U − fitted E[U | history]), which makes the estimator doubly
robust: it is consistent when either the exposure or the outcome models
are correct.

For the s1 blip the instrument is the exposure residual at s1, and the
first equation also carries it scaled by the change in the s2 propensity
that switching A(s1) induces (directly and through the space-varying
covariate). The equations are linear in (β1, β2), so they solve in
closed form through six per-year sums.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.data.panel import PanelDataset
from src.errors import DegenerateDenominatorError, SpecError
from src.gmethods.base import S1, S2, TARGET, EstimandSpec, EstimateReport, build_report, require_anchor
from src.inference.mestimate import StackBuilder, sandwich
from src.models.design import Design, complete_rows
from src.models.glm import FitResult, cluster_sum, fit_linear, fit_logistic
from src.models.spec import ModelSpec, TermSpec

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-10


@dataclass(eq=False)
class SnmBlocks:
    """Row-level residuals and the per-year sums of the closed form.

    Attributes:
        B0: A(s2) minus its fitted propensity.
        B11: A(s1) minus its fitted propensity.
        B12: B11 times the induced change in the s2 propensity.
        r0: Y minus the fitted mean with the s2 blip removed.
        r1: Y minus the fitted mean with both blips removed.
        A1: Exposure at s1.
        A2: Exposure at s2.
        clusters: Year index per row.
        m: Number of years.
    """

    B0: np.ndarray
    B11: np.ndarray
    B12: np.ndarray
    r0: np.ndarray
    r1: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    clusters: np.ndarray
    m: int

    def _sum(self, values: np.ndarray) -> np.ndarray:
        return cluster_sum(values, self.clusters, self.m)

    @property
    def C(self) -> np.ndarray:
        return self._sum(self.B0 * self.r0 + self.B12 * self.r1)

    @property
    def D(self) -> np.ndarray:
        return self._sum((self.B0 + self.B12) * self.A2)

    @property
    def E(self) -> np.ndarray:
        return self._sum(self.B12 * self.A1)

    @property
    def F(self) -> np.ndarray:
        return self._sum(self.B11 * self.r1)

    @property
    def G(self) -> np.ndarray:
        return self._sum(self.B11 * self.A2)

    @property
    def H(self) -> np.ndarray:
        return self._sum(self.B11 * self.A1)

    def sums(self) -> Mapping[str, np.ndarray]:
        return {k: getattr(self, k) for k in "CDEFGH"}

    def equations(self, beta: Sequence[float]) -> np.ndarray:
        """Per-year estimating functions at (β1, β2), shape (m, 2)."""
        b1, b2 = beta
        u0 = self.r0 - b1 * self.A2
        u1 = self.r1 - b1 * self.A2 - b2 * self.A1
        rows = np.column_stack([self.B0 * u0 + self.B12 * u1, self.B11 * u1])
        return cluster_sum(rows, self.clusters, self.m)

    def closed_form(self) -> Tuple[float, float]:
        """Solve the summed equations for (β1, β2).

        Raises:
            DegenerateDenominatorError: ΣE·ΣG equals ΣD·ΣH (to 1e-10 relative) or ΣE = 0.
        """
        C, D, E, F, G, H = (float(v.sum()) for v in (self.C, self.D, self.E, self.F, self.G, self.H))
        eg, dh = E * G, D * H
        scale = max(abs(eg), abs(dh))
        if scale == 0.0 or abs(eg - dh) <= DEGENERACY_TOL * scale:
            raise DegenerateDenominatorError(
                f"closed form is singular: sum E * sum G = {eg:.6g}, sum D * sum H = {dh:.6g}"
            )
        if abs(E) <= DEGENERACY_TOL * float(np.abs(self.B12 * self.A1).sum()):
            raise DegenerateDenominatorError("sum E is zero: exposure at s1 does not move the s2 propensity")
        beta1 = (E * F - C * H) / (eg - dh)
        beta2 = (D * F - C * G) / (dh - eg)
        return beta1, beta2


class _SnmPieces:
    """Fitted models and the counterfactual design matrices the blocks need."""

    def __init__(self, spec: EstimandSpec, outcome: FitResult, covariate: FitResult,
                 exposure_s1: FitResult, exposure_s2: FitResult):
        self.outcome, self.covariate = outcome, covariate
        self.exposure_s1, self.exposure_s2 = exposure_s1, exposure_s2
        a_up = TermSpec(spec.exposure, -1)
        a_up2 = TermSpec(spec.exposure, -2)
        l_here = TermSpec(covariate.spec.response.variable)
        l_up = TermSpec(covariate.spec.response.variable, -1)

        self.A1 = exposure_s1.design.y
        self.A2 = exposure_s2.design.y
        self.Y = outcome.design.y
        self.cov_X = {a: _override(covariate.design, {a_up: a}) for a in (0.0, 1.0)}
        self.e2_terms = (a_up, l_here)
        self.out_terms = (a_up, a_up2, l_up)

    def blocks(self, theta_out: np.ndarray, theta_cov: np.ndarray,
               alpha1: np.ndarray, alpha2: np.ndarray) -> SnmBlocks:
        gamma = theta_cov[:self.covariate.design.p]
        l_hat = {a: X @ gamma for a, X in self.cov_X.items()}
        a_up, l_here = self.e2_terms
        e2 = self.exposure_s2.design
        p2 = {a: expit(_override(e2, {a_up: a, l_here: l_hat[a]}) @ alpha2) for a in (0.0, 1.0)}
        rho0 = expit(e2.X @ alpha2)
        pi1 = expit(self.exposure_s1.design.X @ alpha1)
        B0 = self.A2 - rho0
        B11 = self.A1 - pi1
        B12 = B11 * (p2[1.0] - p2[0.0])

        a_up, a_up2, l_up = self.out_terms
        out = self.outcome.design
        beta = theta_out[:out.p]
        lam0 = _override(out, {a_up: 0.0}) @ beta
        lam1 = _override(out, {a_up: 0.0, a_up2: 0.0, l_up: l_hat[0.0]}) @ beta
        return SnmBlocks(
            B0=B0, B11=B11, B12=B12, r0=self.Y - lam0, r1=self.Y - lam1,
            A1=self.A1, A2=self.A2, clusters=out.clusters, m=out.m,
        )


def _override(design: Design, values: Mapping[TermSpec, object]) -> np.ndarray:
    """Counterfactual design matrix; terms absent from the model are skipped."""
    present = {t: v for t, v in values.items() if t.key in design.factors}
    return design.with_overrides(present) if present else design.X


def snm(
    data: PanelDataset,
    spec: EstimandSpec,
    outcome_model: ModelSpec,
    exposure_models: Sequence[ModelSpec],
    covariate_model: ModelSpec,
    level: float = 0.90,
) -> EstimateReport:
    """Estimate μ by g-estimation of the structural nested mean model.

    Args:
        data: Panel with the discretized exposure.
        spec: Estimand.
        outcome_model: Gaussian outcome model at the target (supplies the
            fitted outcome means).
        exposure_models: Full-history binomial exposure models at (s1, s2)
            (supply the propensities).
        covariate_model: Gaussian model of the space-varying covariate at s2,
            used to carry a switch of A(s1) through to the s2 propensity
            and the outcome mean.
        level: Confidence level.

    Returns:
        EstimateReport with μ̂ = d2·β1 + d1·β2.

    Raises:
        DegenerateDenominatorError: Exposure constant on the rows, or a
            singular closed form.
    """
    if len(exposure_models) != 2:
        raise SpecError("snm needs one exposure model per exposure location")
    exposure_s1, exposure_s2 = exposure_models
    require_anchor(outcome_model, TARGET, "outcome")
    require_anchor(covariate_model, S2, "covariate")
    require_anchor(exposure_s1, S1, "exposure_s1")
    require_anchor(exposure_s2, S2, "exposure_s2")
    for model in (exposure_s1, exposure_s2):
        if model.family != "binomial" or model.response.variable != spec.exposure:
            raise SpecError(f"exposure models must be binomial models of {spec.exposure}")
    if not exposure_s2.has_term(TermSpec(spec.exposure, -1)):
        raise SpecError(f"exposure_s2 model needs term {TermSpec(spec.exposure, -1).name}")

    chain = spec.chain_view(data)
    models = [outcome_model, covariate_model, exposure_s1, exposure_s2]
    rows = complete_rows(chain, models, spec.months)
    a = chain.variable(spec.exposure)
    for position in (S1, S2):
        observed = a[:, position, :][rows]
        if observed.size and np.all(observed == observed[0]):
            raise DegenerateDenominatorError(
                f"exposure at {chain.locations[position]:g} km is constant ({observed[0]:g}); "
                "exposure residuals vanish"
            )

    outcome_fit = fit_linear(chain, outcome_model, rows=rows, months=spec.months)
    covariate_fit = fit_linear(chain, covariate_model, rows=rows, months=spec.months)
    e1_fit = fit_logistic(chain, exposure_s1, rows=rows, months=spec.months)
    e2_fit = fit_logistic(chain, exposure_s2, rows=rows, months=spec.months)
    pieces = _SnmPieces(spec, outcome_fit, covariate_fit, e1_fit, e2_fit)

    beta = pieces.blocks(outcome_fit.theta, covariate_fit.theta, e1_fit.theta, e2_fit.theta).closed_form()

    builder = StackBuilder(chain.m)
    out = builder.add_fit(outcome_fit, "outcome")
    cov = builder.add_fit(covariate_fit, "covariate")
    e1 = builder.add_fit(e1_fit, "exposure_s1")
    e2 = builder.add_fit(e2_fit, "exposure_s2")

    def snm_equations(theta: np.ndarray) -> np.ndarray:
        blocks = pieces.blocks(theta[out], theta[cov], theta[e1], theta[e2])
        return blocks.equations(theta[snm_block])

    snm_block = builder.add(np.array(beta), ["snm:a_s2", "snm:a_s1"], snm_equations)
    stack = builder.build()
    stack.check_solution()

    j1, j2 = snm_block.start, snm_block.start + 1
    d1, d2 = spec.contrast

    def transform(theta: np.ndarray) -> float:
        return d2 * theta[j1] + d1 * theta[j2]

    def gradient(theta: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(theta)
        grad[j1] = d2
        grad[j2] = d1
        return grad

    report = build_report(
        "snm", sandwich(stack), transform, gradient,
        components={"a_s2": float(beta[0]), "a_s1": float(beta[1])},
        level=level, diagnostics={"n_rows": outcome_fit.design.n, "converged": True},
    )
    logger.debug("SNM: mu_hat=%.4f on %d rows", report.mu_hat, outcome_fit.design.n)
    return report


def snm_blocks(
    data: PanelDataset,
    spec: EstimandSpec,
    outcome_model: ModelSpec,
    exposure_models: Sequence[ModelSpec],
    covariate_model: ModelSpec,
) -> SnmBlocks:
    """Fit the working models and return the blocks at the fitted values."""
    chain = spec.chain_view(data)
    models = [outcome_model, covariate_model] + list(exposure_models)
    rows = complete_rows(chain, models, spec.months)
    fits = (
        fit_linear(chain, outcome_model, rows=rows, months=spec.months),
        fit_linear(chain, covariate_model, rows=rows, months=spec.months),
        fit_logistic(chain, exposure_models[0], rows=rows, months=spec.months),
        fit_logistic(chain, exposure_models[1], rows=rows, months=spec.months),
    )
    return _SnmPieces(spec, *fits).blocks(*(f.theta for f in fits))
