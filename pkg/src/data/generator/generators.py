"""
Simulation of river panels from the structural equations, and the true
effect they imply.
"""

import logging
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.data.panel import EXPOSURE, PanelDataset

from .config import DgpConfig

logger = logging.getLogger(__name__)

GENERATOR = "numpy.random.PCG64"

SeedLike = Union[int, np.random.SeedSequence]

# Month -> (A1, A2) forced levels.
Intervention = Mapping[int, Tuple[int, int]]


def replicate_seed(base_seed: int, m: int, replicate: int) -> np.random.SeedSequence:
    """Independent stream for replicate r at sample size m."""
    return np.random.SeedSequence(base_seed, spawn_key=(int(m), int(replicate)))


def make_rng(seed: SeedLike) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


class StructuralSimulator:
    """Draws the structural equations month by month for all years at once.

    Every month consumes the same random numbers whatever the intervention,
    so arms simulated from one seed share their noise.
    """

    def __init__(self, config: DgpConfig):
        self.config = config

    def draw(self, m: int, rng: np.random.Generator,
             intervention: Optional[Intervention] = None) -> Dict[str, np.ndarray]:
        """Simulate m years.

        Returns:
            Node name -> (m, n_t + 1) array for L11, A1, L12, L22, A2, Y3.
        """
        c = self.config
        intervention = dict(intervention or {})
        n = c.n_t + 1
        nodes = {name: np.full((m, n), np.nan) for name in ("L11", "A1", "L12", "L22", "A2", "Y3")}

        nodes["L11"][:, 0] = c.l11_0_mean + c.l11_0_sd * rng.standard_normal(m)
        nodes["L22"][:, 0] = c.l22_0_mean + c.l22_0_sd * rng.standard_normal(m)
        u1, u2 = rng.random(m), rng.random(m)
        nodes["A1"][:, 0] = self._exposure(u1, c.a_0_prob, intervention.get(0), 0)
        nodes["A2"][:, 0] = self._exposure(u2, c.a_0_prob, intervention.get(0), 1)
        nodes["Y3"][:, 0] = c.y_0_mean + c.y_0_sd * rng.standard_normal(m)

        for t in range(1, n):
            forced = intervention.get(t)
            L11 = c.l11_intercept + c.l11_lag * nodes["L11"][:, t - 1] + c.l11_sd * rng.standard_normal(m)
            p1 = expit(c.a1_intercept + c.a1_l11 * L11 + c.a1_lag * nodes["A1"][:, t - 1])
            A1 = self._exposure(rng.random(m), p1, forced, 0)
            L12 = c.l12_intercept + c.l12_l11_lag * nodes["L11"][:, t - 1] + c.l12_sd * rng.standard_normal(m)
            L22 = (c.l22_intercept + c.l22_l12 * L12 + c.l22_lag * nodes["L22"][:, t - 1]
                   + c.l22_a1 * A1 + c.l22_sd * rng.standard_normal(m))
            p2 = expit(c.a2_intercept + c.a2_l12 * L12 + c.a2_l22 * L22 + c.a2_a1 * A1
                       + c.a2_lag * nodes["A2"][:, t - 1])
            A2 = self._exposure(rng.random(m), p2, forced, 1)
            Y3 = (c.y_intercept + c.y_a2 * A2 + c.y_a1 * A1 + c.y_l12 * L12 + c.y_l22 * L22
                  + c.y_lag * nodes["Y3"][:, t - 1] + c.y_sd * rng.standard_normal(m))
            for name, value in (("L11", L11), ("A1", A1), ("L12", L12), ("L22", L22), ("A2", A2), ("Y3", Y3)):
                nodes[name][:, t] = value
        return nodes

    @staticmethod
    def _exposure(u: np.ndarray, p, forced: Optional[Tuple[int, int]], position: int) -> np.ndarray:
        if forced is not None:
            return np.full(u.shape, float(forced[position]))
        return (u < p).astype(float)

    def to_panel(self, nodes: Dict[str, np.ndarray]) -> PanelDataset:
        """Arrange simulated nodes on the three-location grid."""
        c = self.config
        m, n = nodes["Y3"].shape
        shape = (m, 3, n)
        y, a, l1, l2 = (np.full(shape, np.nan) for _ in range(4))
        y[:, 2] = nodes["Y3"]
        a[:, 0], a[:, 1] = nodes["A1"], nodes["A2"]
        l1[:, 0], l1[:, 1] = nodes["L11"], nodes["L12"]
        l2[:, 1] = nodes["L22"]
        return PanelDataset(
            years=tuple(range(c.first_year, c.first_year + m)),
            locations=c.locations_km,
            months=c.months,
            values={"y": y, EXPOSURE: a, "L1": l1, "L2": l2},
            outcome="y",
            covariates=("L1", "L2"),
            baseline=True,
        )


def simulate_dataset(
    config: DgpConfig,
    m: int,
    seed: SeedLike,
    intervention: Optional[Intervention] = None,
) -> PanelDataset:
    """Simulate m independent years.

    Args:
        config: Structural equation coefficients.
        m: Number of years (>= 1).
        seed: Integer seed or SeedSequence; identical inputs give identical panels.
        intervention: Optional month -> (A1, A2) levels forced in place of draws.

    Returns:
        Panel with locations config.locations_km, months 0..n_t (0 = baseline)
        and variables y (outcome site), a (exposure sites), L1 and L2.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    simulator = StructuralSimulator(config)
    nodes = simulator.draw(int(m), make_rng(seed), intervention)
    return simulator.to_panel(nodes)


def true_mu(config: DgpConfig, high: Tuple[int, int] = (1, 1), low: Tuple[int, int] = (0, 0)) -> float:
    """Effect implied by the linear structural equations.

    Setting A2 moves the outcome directly; setting A1 moves it directly and
    through L22.
    """
    d1, d2 = high[0] - low[0], high[1] - low[1]
    return d2 * config.y_a2 + d1 * (config.y_a1 + config.y_l22 * config.l22_a1)


def interventional_mu(
    config: DgpConfig,
    n: int = 1_000_000,
    seed: SeedLike = 0,
    high: Tuple[int, int] = (1, 1),
    low: Tuple[int, int] = (0, 0),
) -> float:
    """Monte Carlo effect: simulate both arms by forcing the exposures.

    For each month t the exposures of months 1..t-1 are set to 0 in both arms
    and month t is set to the arm's levels; the outcome difference at t is
    averaged over years and then over months. Both arms reuse one seed.
    """
    simulator = StructuralSimulator(config)
    effects = []
    for t in range(1, config.n_t + 1):
        history = {k: (0, 0) for k in range(1, t)}
        arms = []
        for levels in (high, low):
            nodes = simulator.draw(n, make_rng(seed), {**history, t: tuple(levels)})
            arms.append(nodes["Y3"][:, t].mean())
        effects.append(arms[0] - arms[1])
    logger.debug("Interventional effects per month: %s", np.round(effects, 4))
    return float(np.mean(effects))
