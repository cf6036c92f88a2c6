"""Analytic benchmark functions and the convergence-sweep harness.

The two stock problems put their level sets on [-5, 5]**d with dyadic size
schedules chosen so the level-0 tessellation divides the domain exactly (64
cells per axis for the 2D drop-wave, 4 per axis for the 3D Styblinski-Tang;
sizes are measured in domain units throughout).  Noise follows the averaged
Monte Carlo model: an evaluation at level l charges M_l = M0 * h_l**(-a/b)
cost units and carries Gaussian noise of variance (per-sample variance)/M_l,
so accuracy and accounted cost stay consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._validation import check_int, check_scalar
from .grid import Domain
from .metrics import expected_error, fit_loglog_slope
from .oracles import (DeterministicOracle, EvaluationOracle,
                      GaussianNoiseOracle, averaged_mc_variance)
from .refine import RunConfig

__all__ = [
    "drop_wave",
    "styblinski_tang",
    "level_for_tolerance",
    "Problem",
    "DROP_WAVE",
    "STYBLINSKI_TANG",
    "SweepResult",
    "convergence_sweep",
    "unit_noise_sampler",
]


def drop_wave(x) -> np.ndarray | float:
    """2D drop-wave benchmark: 1/5 - (1 + cos(12 |x|)) / (|x|^2 / 2 + 2).

    Finite everywhere (the apparent singularity at the origin is removable);
    radially symmetric, with a nest of ring-shaped zero level sets.
    """
    X = np.asarray(x, dtype=np.float64)
    scalar = X.ndim == 1
    X = np.atleast_2d(X)
    r2 = np.sum(X * X, axis=-1)
    out = 0.2 - (1.0 + np.cos(12.0 * np.sqrt(r2))) / (0.5 * r2 + 2.0)
    return float(out[0]) if scalar else out


def styblinski_tang(x) -> np.ndarray | float:
    """Scaled and shifted 3D Styblinski-Tang: (sum x^4 - 16 x^2 + 5 x)/122 + 1."""
    X = np.asarray(x, dtype=np.float64)
    scalar = X.ndim == 1
    X = np.atleast_2d(X)
    out = np.sum(X**4 - 16.0 * X**2 + 5.0 * X, axis=-1) / 122.0 + 1.0
    return float(out[0]) if scalar else out


def level_for_tolerance(eps: float, cfg: RunConfig) -> int:
    """Smallest level whose cell size meets the tolerance: h_L <= eps**(1/alpha_p)."""
    eps = check_scalar(eps, "eps", exclusive_minimum=0.0)
    target = eps ** (1.0 / cfg.alpha_p)
    if cfg.h0 <= target:
        return 0
    return max(0, math.ceil(math.log2(cfg.h0 / target) - 1e-12))


def unit_noise_sampler(f: Callable) -> Callable:
    """Sampler g(x, size, rng) = f(x) + unit-variance Gaussian draws."""

    def sampler(x, size, rng):
        return f(np.asarray(x, dtype=np.float64)) + rng.standard_normal(size)

    return sampler


def drop_wave_unit_noise(x, size, rng):
    """Importable Monte Carlo sampler for the drop-wave target (unit variance)."""
    return drop_wave(np.asarray(x, dtype=np.float64)) + rng.standard_normal(size)


@dataclass(frozen=True)
class Problem:
    """A benchmark target: function, domain, size schedule, noise scale."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    domain: Domain
    h0: float
    sample_variance: float  # per-draw variance of the modelled MC sampler

    def config(self, max_level: int, *, alpha: float = 2.0, beta: float = 0.5,
               p: float = math.inf, R: float | None = None, c: float = 1.0,
               M0: float = 1.0, seed: int = 0) -> RunConfig:
        return RunConfig(domain=self.domain, h0=self.h0, max_level=max_level,
                         alpha=alpha, beta=beta, p=p, R=R, c=c, M0=M0, seed=seed)

    def oracle(self, cfg: RunConfig, *, noisy: bool = True) -> EvaluationOracle:
        if not noisy or math.isinf(cfg.beta):
            return DeterministicOracle(self.f, M0=cfg.M0, domain=self.domain)
        schedule = cfg.schedule()
        return GaussianNoiseOracle(
            self.f,
            variance_at=averaged_mc_variance(schedule, self.sample_variance),
            schedule=schedule,
            sigma=math.sqrt(self.sample_variance),
            domain=self.domain,
        )


DROP_WAVE = Problem(
    name="drop_wave",
    f=drop_wave,
    domain=Domain(lower=(-5.0, -5.0), upper=(5.0, 5.0)),
    h0=10.0 / 64.0,            # 64 cells per axis at level 0: h_l = 10 * 2**-(l+6)
    sample_variance=1.0,
)

STYBLINSKI_TANG = Problem(
    name="styblinski_tang",
    f=styblinski_tang,
    domain=Domain(lower=(-5.0, -5.0, -5.0), upper=(5.0, 5.0, 5.0)),
    h0=10.0 / 4.0,             # 4 cells per axis at level 0: h_l = 10 * 2**-(l+2)
    sample_variance=1.0 / 3.0,
)

PROBLEMS = {p.name: p for p in (DROP_WAVE, STYBLINSKI_TANG)}


@dataclass
class SweepRow:
    L: int
    ell0: int
    h_L: float
    error_mean: float
    error_std_error: float
    work_total: float
    leaf_cells: float


@dataclass
class SweepResult:
    """Per-level results of a work-versus-error convergence study."""

    rows: list[SweepRow]
    fitted_slope: float
    target_slope: float
    point_family: str = "sobol-cranley-patterson"

    def pairs(self) -> list[tuple[float, float]]:
        return [(r.error_mean, r.work_total) for r in self.rows]


def target_work_error_slope(cfg: RunConfig, *, uniform: bool = False) -> float:
    """Theoretical log work / log error slope: -(1/beta + (d - k)/alpha), k=1 adaptive."""
    d = cfg.d
    inv_beta = 0.0 if math.isinf(cfg.beta) else 1.0 / cfg.beta
    spatial = d if uniform else d - 1
    return -(inv_beta + spatial / cfg.alpha) * (cfg.alpha / cfg.alpha_p)


def convergence_sweep(problem: Problem, L_range: Sequence[int], *,
                      cfg: RunConfig | None = None, n_runs: int = 10,
                      n_points: int = 512, noisy: bool = True,
                      uniform: bool = False, seed: int = 0,
                      workers: int = 1) -> SweepResult:
    """Run the benchmark across final levels and fit the work-error slope.

    For each L: build the config, average the sign-mismatch error over n_runs
    independent runs, and record mean work and leaf counts; then fit the
    log-log slope of total work against mean error.
    """
    Ls = [check_int(L, "L", minimum=1) for L in L_range]
    if not Ls or any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L_range must be nonempty and strictly ascending")
    base_cfg = problem.config(Ls[0], seed=seed) if cfg is None else cfg

    rows = []
    for L in Ls:
        cfg_L = replace(base_cfg, max_level=L)
        oracle = problem.oracle(cfg_L, noisy=noisy)
        est = expected_error(cfg_L, oracle, problem.f, n_runs=n_runs,
                             n_points=n_points, uniform=uniform, workers=workers)
        rows.append(SweepRow(L=L, ell0=cfg_L.ell0, h_L=cfg_L.cell_size(L),
                             error_mean=est.mean, error_std_error=est.std_error,
                             work_total=est.work_mean,
                             leaf_cells=est.leaf_cells_mean))
    fitted = math.nan
    positive = [(r.error_mean, r.work_total) for r in rows if r.error_mean > 0]
    if len(positive) >= 2:
        fitted, _ = fit_loglog_slope(positive)
    target = target_work_error_slope(replace(base_cfg, max_level=Ls[-1]), uniform=uniform)
    return SweepResult(rows=rows, fitted_slope=fitted, target_slope=target)
