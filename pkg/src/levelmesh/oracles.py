"""Noisy point evaluation with level-dependent accuracy and exact cost accounting.

An oracle returns one sample of the level-l approximation of the target
function at a point, plus the accounted cost of that evaluation.  All
randomness is keyed (see streams): the same key always reproduces the same
sample, bit for bit, regardless of evaluation order or parallel schedule.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._validation import check_in_domain, check_scalar
from .streams import Tag, chain, normals

__all__ = [
    "CostSchedule",
    "cost_per_eval",
    "EvaluationOracle",
    "DeterministicOracle",
    "GaussianNoiseOracle",
    "MonteCarloOracle",
    "averaged_mc_variance",
]


@dataclass(frozen=True)
class CostSchedule:
    """Per-evaluation cost M_l = M0 * h_l**(-alpha/beta).

    beta = inf gives a constant cost M0 (the deterministic case).  h0 anchors
    the dyadic size schedule h_l = h0 * 2**-l used by at_level.
    """

    M0: float
    alpha: float
    beta: float
    h0: float = 1.0

    def __post_init__(self):
        check_scalar(self.M0, "M0", exclusive_minimum=0.0)
        check_scalar(self.alpha, "alpha", exclusive_minimum=0.0)
        check_scalar(self.beta, "beta", exclusive_minimum=0.0, allow_inf=True)
        check_scalar(self.h0, "h0", exclusive_minimum=0.0)

    @property
    def exponent(self) -> float:
        return 0.0 if math.isinf(self.beta) else self.alpha / self.beta

    def for_size(self, h: float) -> float:
        if not h > 0:
            raise ValueError(f"cell size must be positive, got {h}")
        return self.M0 * h ** (-self.exponent)

    def at_level(self, level: int) -> float:
        return self.for_size(self.h0 * 2.0 ** (-int(level)))


def cost_per_eval(schedule: CostSchedule, level: int, h: float) -> float:
    """Cost of one point evaluation at the given level of size h."""
    del level  # the size carries the level; kept for call-site clarity
    return schedule.for_size(h)


def averaged_mc_variance(schedule: CostSchedule, sample_variance: float = 1.0
                         ) -> Callable[[int], float]:
    """Variance schedule of a mean of M_l i.i.d. draws: sample_variance / M_l.

    This is the noise level of the averaged Monte Carlo estimator whose cost
    the schedule charges, so noise decay and accounted cost stay consistent
    (standard deviation sample_std * M_l**-1/2 for the mean of M_l draws).
    """
    check_scalar(sample_variance, "sample_variance", minimum=0.0)
    return lambda level: sample_variance / schedule.at_level(level)


class EvaluationOracle(ABC):
    """Abstract noisy evaluator of the target function.

    Implementations declare a cost schedule and must be deterministic given
    (point, level, key): replaying a key reproduces the sample exactly.
    When a domain is attached, evaluations outside it raise ValueError.
    """

    schedule: CostSchedule
    sigma: float | None = None  # noise-scale constant, reported only
    domain = None

    def _check_domain(self, points: np.ndarray) -> None:
        if self.domain is not None:
            check_in_domain(points, self.domain.lower_array(),
                            self.domain.upper_array(), what="evaluation point")

    @abstractmethod
    def evaluate_batch(self, points: np.ndarray, level: int,
                       keys: np.ndarray) -> tuple[np.ndarray, float]:
        """Sample at (n, d) points with (n,) keys; returns (values, cost per eval)."""

    def evaluate(self, x, level: int, key) -> tuple[float, float]:
        """Sample at a single point; returns (value, cost)."""
        pt = np.asarray(x, dtype=np.float64).reshape(1, -1)
        keys = np.asarray(key, dtype=np.uint64).reshape(1)
        values, cost = self.evaluate_batch(pt, level, keys)
        return float(values[0]), cost


class DeterministicOracle(EvaluationOracle):
    """Exact evaluation of an analytic target; sigma = 0, constant cost M0."""

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], M0: float = 1.0,
                 domain=None):
        self.f = f
        self.schedule = CostSchedule(M0=M0, alpha=1.0, beta=math.inf)
        self.sigma = 0.0
        self.domain = domain

    def evaluate_batch(self, points, level, keys):
        del keys
        self._check_domain(points)
        return np.asarray(self.f(points), dtype=np.float64), self.schedule.at_level(level)


class GaussianNoiseOracle(EvaluationOracle):
    """Target plus keyed zero-mean Gaussian noise with a level variance schedule.

    Models the *averaged* Monte Carlo estimator: each evaluation draws a single
    Gaussian with the scheduled variance while charging the schedule's full
    M_l cost, which keeps deep-level experiments affordable without touching
    the work accounting.  Noise at distinct keys is independent, including at
    shared vertex coordinates of neighboring cells.
    """

    def __init__(self, f: Callable[[np.ndarray], np.ndarray],
                 variance_at: Callable[[int], float],
                 schedule: CostSchedule, sigma: float | None = None,
                 domain=None):
        self.f = f
        self.variance_at = variance_at
        self.schedule = schedule
        self.sigma = sigma
        self.domain = domain

    def evaluate_batch(self, points, level, keys):
        self._check_domain(points)
        var = float(self.variance_at(int(level)))
        if var < 0:
            raise ValueError(f"variance_at({level}) is negative: {var}")
        clean = np.asarray(self.f(points), dtype=np.float64)
        noise = math.sqrt(var) * normals(chain(keys, Tag.ORACLE_DRAW))
        return clean + noise, self.schedule.at_level(level)


class MonteCarloOracle(EvaluationOracle):
    """Mean of M_l i.i.d. sampler draws per evaluation, charged cost M_l.

    The sampler g(x, size, rng) must return `size` draws with mean f(x); rng is
    a numpy Generator seeded from the evaluation key, so evaluations replay
    exactly.  Non-integer scheduled costs execute round(M_l) draws while the
    accounted cost stays the scheduled value.
    """

    def __init__(self, sampler: Callable[[np.ndarray, int, np.random.Generator], np.ndarray],
                 schedule: CostSchedule, sigma: float | None = None,
                 domain=None):
        self.sampler = sampler
        self.schedule = schedule
        self.sigma = sigma
        self.domain = domain

    def evaluate_batch(self, points, level, keys):
        self._check_domain(points)
        cost = self.schedule.at_level(level)
        n_draws = max(1, int(round(cost)))
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
        out = np.empty(points.shape[0], dtype=np.float64)
        draw_keys = chain(keys, Tag.ORACLE_DRAW)
        for i in range(points.shape[0]):
            rng = np.random.Generator(np.random.Philox(key=int(draw_keys[i])))
            draws = np.asarray(self.sampler(points[i], n_draws, rng), dtype=np.float64)
            if draws.shape != (n_draws,):
                raise ValueError(
                    f"sampler must return {n_draws} draws, got shape {draws.shape}"
                )
            out[i] = draws.mean()
        return out, cost
