"""
Stacked estimating equations: empirical sandwich covariance and the Fay
small-sample bias correction.

A stack holds θ̂ and a function returning the per-cluster contributions
g_i(θ) as an (m, p) array. Per-cluster Jacobians come from a registered
analytic function or from central finite differences.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
from statsmodels.tools.numdiff import approx_fprime

from src.errors import SingularBreadError
from src.models.glm import FitResult

logger = logging.getLogger(__name__)

FAY_B = (0.1, 0.3, 0.75)
MAX_CONDITION = 1e12
SOLUTION_TOL = 1e-6

ContributionFn = Callable[[np.ndarray], np.ndarray]


def variance_label(b: Optional[float]) -> str:
    return "uncorrected" if b is None else f"b{b:g}"


def finite_difference_step(theta: np.ndarray) -> np.ndarray:
    """Central-difference step h_j = 1e-6 * max(1, |θ_j|)."""
    return 1e-6 * np.maximum(1.0, np.abs(theta))


def central_jacobian(fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray) -> np.ndarray:
    """Jacobian of a vector-valued fn by central differences, shape (len(fn), len(theta))."""
    theta = np.asarray(theta, dtype=float)
    # approx_fprime halves epsilon for centered differences
    jac = approx_fprime(theta, fn, epsilon=2.0 * finite_difference_step(theta), centered=True)
    return np.asarray(jac, dtype=float).reshape(-1, theta.size)


@dataclass(eq=False)
class EstimatingStack:
    """Per-cluster estimating functions for a full parameter vector.

    Attributes:
        theta_hat: Solution θ̂ (target and nuisance parameters).
        contributions: θ -> (m, p) array of g_i(θ).
        m: Number of clusters.
        names: Parameter names.
        jacobian: Optional analytic θ -> (m, p, p) per-cluster Jacobians.
        converged: Optional per-component flag; the solution check skips
            components whose sub-model did not converge.
    """

    theta_hat: np.ndarray
    contributions: ContributionFn
    m: int
    names: Tuple[str, ...] = ()
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    converged: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.theta_hat = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        p = self.theta_hat.size
        if not self.names:
            self.names = tuple(f"theta{j}" for j in range(p))
        if len(self.names) != p:
            raise ValueError(f"names has {len(self.names)} entries for {p} parameters")
        g = self.contributions(self.theta_hat)
        if g.shape != (self.m, p):
            raise ValueError(f"contributions have shape {g.shape}, expected ({self.m}, {p})")

    @property
    def p(self) -> int:
        return self.theta_hat.size

    def contribution(self, i: int, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = self.theta_hat if theta is None else theta
        return self.contributions(theta)[i]

    def estimating_sums(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = self.theta_hat if theta is None else theta
        return self.contributions(theta).sum(axis=0)

    def check_solution(self, tol: float = SOLUTION_TOL) -> bool:
        """Warn about components whose estimating sums are not numerically zero at θ̂."""
        sums = np.abs(self.estimating_sums())
        scale = np.maximum(1.0, np.abs(self.contributions(self.theta_hat)).max(axis=0))
        bad = sums > tol * scale
        if self.converged is not None:
            bad &= np.asarray(self.converged, dtype=bool)
        for j in np.flatnonzero(bad):
            logger.warning("Estimating sum for %s is %.3g at the solution", self.names[j], sums[j])
        return not bad.any()

    def per_cluster_jacobian(self, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = self.theta_hat if theta is None else theta
        if self.jacobian is not None:
            return np.asarray(self.jacobian(theta), dtype=float)
        jac = central_jacobian(lambda th: self.contributions(th).ravel(), theta)
        return jac.reshape(self.m, self.p, self.p)

    def numeric(self) -> "EstimatingStack":
        """The same stack with the analytic Jacobian dropped."""
        return EstimatingStack(self.theta_hat, self.contributions, self.m, self.names, None, self.converged)


class StackBuilder:
    """Concatenates sub-model blocks into one EstimatingStack.

    Blocks receive the full θ so later equations may depend on earlier
    parameters (e.g. weighted equations on the weight-model coefficients).
    """

    def __init__(self, m: int):
        self.m = m
        self._theta: List[np.ndarray] = []
        self._names: List[str] = []
        self._fns: List[Tuple[slice, ContributionFn]] = []
        self._fits: List[Optional[FitResult]] = []
        self._converged: List[bool] = []

    def _next_slice(self, k: int) -> slice:
        start = sum(t.size for t in self._theta)
        return slice(start, start + k)

    def add(self, theta: np.ndarray, names: Sequence[str], fn: ContributionFn, converged: bool = True) -> slice:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        block = self._next_slice(theta.size)
        self._theta.append(theta)
        self._names.extend(names)
        self._fns.append((block, fn))
        self._fits.append(None)
        self._converged.extend([converged] * theta.size)
        return block

    def add_fit(self, fit: FitResult, prefix: str) -> slice:
        """Add a fitted model's own equations; returns its θ slice."""
        block = self._next_slice(fit.theta.size)
        names = [f"{prefix}:{n}" for n in fit.parameter_names]
        self.add(fit.theta, names, lambda th, fit=fit, block=block: fit.contributions(th[block]), fit.converged)
        self._fits[-1] = fit
        return block

    def build(self) -> EstimatingStack:
        theta = np.concatenate(self._theta)
        p = theta.size
        fns = list(self._fns)
        m = self.m

        def contributions(th: np.ndarray) -> np.ndarray:
            out = np.empty((m, p))
            for block, fn in fns:
                out[:, block] = fn(th)
            return out

        jacobian = None
        if all(f is not None for f in self._fits):
            fits = list(zip(self._fits, [b for b, _ in fns]))

            def jacobian(th: np.ndarray) -> np.ndarray:
                out = np.zeros((m, p, p))
                for fit, block in fits:
                    out[:, block, block] = fit.jacobian(th[block])
                return out

        return EstimatingStack(theta, contributions, m, tuple(self._names), jacobian, np.array(self._converged))


@dataclass(eq=False)
class CovarianceReport:
    """Sandwich covariance with its bias-corrected variants.

    Attributes:
        theta_hat: Parameter estimates.
        names: Parameter names.
        m: Number of clusters.
        sigma_uncorrected: Â⁻¹ B̂ Â⁻ᵀ / m.
        sigma_bc: b -> bias-corrected covariance.
        A_hat: Mean per-cluster Jacobian (bread).
        B_hat: Mean outer product of contributions (meat).
        A_i: Per-cluster Jacobians, kept for audit.
        contributions: g_i(θ̂), shape (m, p).
        A_inv: Inverse of the bread.
        condition_number: Condition number of Â.
    """

    theta_hat: np.ndarray
    names: Tuple[str, ...]
    m: int
    sigma_uncorrected: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    A_i: np.ndarray = field(repr=False)
    contributions: np.ndarray = field(repr=False)
    A_inv: np.ndarray = field(repr=False)
    condition_number: float = float("nan")
    sigma_bc: Dict[float, np.ndarray] = field(default_factory=dict)

    def variants(self) -> Dict[str, np.ndarray]:
        """Covariance per variant label: 'uncorrected', 'b0.1', 'b0.3', 'b0.75'."""
        out = {variance_label(None): self.sigma_uncorrected}
        for b in sorted(self.sigma_bc):
            out[variance_label(b)] = self.sigma_bc[b]
        return out

    def se(self, variant: str = "uncorrected") -> np.ndarray:
        return np.sqrt(np.diag(self.variants()[variant]))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"parameter": list(self.names), "estimate": self.theta_hat})
        for label in self.variants():
            frame[f"se_{label}"] = self.se(label)
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def _symmetrize(sigma: np.ndarray) -> np.ndarray:
    return 0.5 * (sigma + sigma.T)


def _invert_bread(A_hat: np.ndarray) -> Tuple[np.ndarray, float]:
    U, s, Vt = scipy.linalg.svd(A_hat)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularBreadError(cond)
    return (Vt.T / s) @ U.T, cond


def sandwich(stack: EstimatingStack, b_values: Sequence[float] = FAY_B) -> CovarianceReport:
    """Empirical sandwich covariance of θ̂, plus Fay corrections for each b.

    Raises:
        SingularBreadError: If the bread's condition number exceeds 1e12.
    """
    g = stack.contributions(stack.theta_hat)
    A_i = stack.per_cluster_jacobian()
    A_hat = A_i.mean(axis=0)
    A_inv, cond = _invert_bread(A_hat)
    B_hat = g.T @ g / stack.m
    sigma = _symmetrize(A_inv @ B_hat @ A_inv.T / stack.m)
    report = CovarianceReport(
        theta_hat=stack.theta_hat.copy(),
        names=stack.names,
        m=stack.m,
        sigma_uncorrected=sigma,
        A_hat=A_hat,
        B_hat=B_hat,
        A_i=A_i,
        contributions=g,
        A_inv=A_inv,
        condition_number=cond,
    )
    for b in b_values:
        report.sigma_bc[b] = fay_correct(report, b)
    logger.debug("Sandwich over %d clusters, p=%d, cond(A)=%.3g", stack.m, stack.p, cond)
    return report


def fay_correct(report: CovarianceReport, b: float) -> np.ndarray:
    """Fay bias-corrected sandwich.

    Each cluster's meat is scaled by H_i = diag{(1 - min(b, (A_i Â⁻¹)_jj))^(-1/2)}.
    """
    if not 0.0 < b < 1.0:
        raise ValueError(f"b must be in (0, 1), got {b}")
    leverage = np.einsum("ijk,kj->ij", report.A_i, report.A_inv)
    H = (1.0 - np.minimum(b, leverage)) ** -0.5
    scaled = H * report.contributions
    B_bc = scaled.T @ scaled / report.m
    return _symmetrize(report.A_inv @ B_bc @ report.A_inv.T / report.m)
