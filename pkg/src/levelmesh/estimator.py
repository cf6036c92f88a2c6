"""Scikit-learn style estimator wrapping the adaptive level-set engine.

LevelSetEstimator carries the run parameters, fits against an evaluation
oracle, and then classifies points by the sign of the fitted piecewise
multilinear approximant.  It follows the sklearn protocol (get_params /
set_params, trailing-underscore fitted attributes, fit returns self) without
requiring scikit-learn itself.
"""

from __future__ import annotations

import inspect
import math

import numpy as np

from ._validation import as_point_array, check_in_domain
from .extract import LevelSetGeometry, extract_levelset
from .grid import Domain
from .oracles import EvaluationOracle
from .refine import RunConfig, resume, run_adaptive

__all__ = ["LevelSetEstimator"]


class LevelSetEstimator:
    """Adaptive estimator of the zero level set of a noisily evaluated function.

    Parameters
    ----------
    domain : Domain or (lower, upper) pair of coordinate sequences
        Box domain to search.
    max_level : int
        Final refinement level L; cells stop at size h0 * 2**-L.
    h0 : float or None
        Level-0 cell size (domain units).  None uses one cell per unit
        extent only if the extents are integers; otherwise it must be given.
    alpha, beta, p : float
        Local approximation rate, oracle accuracy-versus-cost rate (inf for
        noise-free), and the moment index controlling the noise norm (inf for
        worst-case control).
    R, c : float
        Refinement-strictness exponent in (1, alpha_p) (None picks
        (1 + alpha_p)/2) and the linear threshold scale.
    M0 : float
        Cost of one evaluation on the unit-size cell.
    seed : int
        Master seed; the entire fit is a deterministic function of
        (parameters, oracle, seed).
    base_level_override : int or None
        Force the first adaptive level (the uniform-refinement depth) instead
        of deriving it from (max_level, p, R).
    uniform : bool
        Refine every cell at every level (the non-adaptive baseline).
    workers : int
        Worker threads for within-level sampling; any value produces
        bit-identical results.

    Attributes
    ----------
    result_ : RunResult
    mesh_ : AdaptiveMesh            leaf mesh with fitted vertex values
    ledger_ : WorkLedger            exact work accounting
    config_ : RunConfig             the validated run configuration
    n_leaves_ : int
    total_work_ : float
    """

    def __init__(self, domain=None, max_level: int = 4, h0: float | None = None,
                 alpha: float = 2.0, beta: float = 0.5, p: float = math.inf,
                 R: float | None = None, c: float = 1.0, M0: float = 1.0,
                 seed: int = 0, base_level_override: int | None = None,
                 uniform: bool = False, workers: int = 1):
        self.domain = domain
        self.max_level = max_level
        self.h0 = h0
        self.alpha = alpha
        self.beta = beta
        self.p = p
        self.R = R
        self.c = c
        self.M0 = M0
        self.seed = seed
        self.base_level_override = base_level_override
        self.uniform = uniform
        self.workers = workers

    # -- sklearn parameter protocol -----------------------------------------

    @classmethod
    def _get_param_names(cls):
        sig = inspect.signature(cls.__init__)
        return sorted(p.name for p in sig.parameters.values() if p.name != "self")

    def get_params(self, deep: bool = True) -> dict:
        del deep
        return {name: getattr(self, name) for name in self._get_param_names()}

    def set_params(self, **params) -> "LevelSetEstimator":
        valid = set(self._get_param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for LevelSetEstimator; "
                    f"valid parameters: {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items()
                         if v is not None)
        return f"{type(self).__name__}({args})"

    # -- configuration --------------------------------------------------------

    def _build_config(self) -> RunConfig:
        if self.domain is None:
            raise ValueError("domain must be set before fitting")
        domain = self.domain if isinstance(self.domain, Domain) else Domain(*self.domain)
        h0 = self.h0
        if h0 is None:
            extents = domain.extents
            if not np.allclose(extents, np.round(extents)):
                raise ValueError("h0 must be given when domain extents are not integers")
            h0 = 1.0
        cfg = RunConfig(domain=domain, h0=float(h0), max_level=self.max_level,
                        alpha=self.alpha, beta=self.beta, p=self.p, R=self.R,
                        c=self.c, M0=self.M0, seed=self.seed,
                        base_level_override=self.base_level_override)
        cfg.validate()
        return cfg

    # -- fitting ---------------------------------------------------------------

    def fit(self, oracle: EvaluationOracle, y=None) -> "LevelSetEstimator":
        """Run the adaptive refinement sweep against the oracle."""
        del y
        cfg = self._build_config()
        self.result_ = run_adaptive(cfg, oracle, uniform=self.uniform,
                                    workers=self.workers)
        self._finish(oracle)
        return self

    def extend(self, new_max_level: int, oracle: EvaluationOracle) -> "LevelSetEstimator":
        """Deepen a fitted estimator to a new final level (resume semantics)."""
        self._check_fitted()
        self.result_ = resume(self.result_, new_max_level, oracle,
                              workers=self.workers)
        self.max_level = new_max_level
        self._finish(oracle)
        return self

    def _finish(self, oracle) -> None:
        self._oracle = oracle
        self.config_ = self.result_.config
        self.mesh_ = self.result_.mesh()
        self.ledger_ = self.result_.ledger
        self.n_leaves_ = self.mesh_.n_cells
        self.total_work_ = self.ledger_.total_cost
        self._lookup = None

    def _check_fitted(self) -> None:
        if not hasattr(self, "result_"):
            raise ValueError("this LevelSetEstimator instance is not fitted yet")

    # -- prediction --------------------------------------------------------------

    def _leaf_lookup(self):
        if self._lookup is None:
            lookup = []
            counts0 = self.mesh_.base_counts
            for level in sorted(self.mesh_.levels, reverse=True):
                idx, vals = self.mesh_.level_arrays(level)
                counts = counts0 * (1 << level)
                lin = idx[:, 0].astype(np.int64).copy()
                for ax in range(1, self.mesh_.d):
                    lin = lin * int(counts[ax]) + idx[:, ax]
                order = np.argsort(lin)
                lookup.append((level, counts, lin[order], vals[order]))
            self._lookup = lookup
        return self._lookup

    def decision_function(self, X) -> np.ndarray:
        """Fitted approximant values at points (finest containing leaf wins)."""
        self._check_fitted()
        mesh = self.mesh_
        pts = as_point_array(X, mesh.d)
        lower = mesh.domain.lower_array()
        upper = mesh.domain.upper_array()
        check_in_domain(pts, lower, upper)

        from .approx import eval_batch

        out = np.full(pts.shape[0], np.nan)
        remaining = np.ones(pts.shape[0], dtype=bool)
        for level, counts, lin_sorted, vals_sorted in self._leaf_lookup():
            if not remaining.any():
                break
            h = mesh.cell_size(level)
            raw = np.floor((pts - lower) / h).astype(np.int64)
            raw = np.clip(raw, 0, counts[None, :] - 1)
            lin = raw[:, 0].copy()
            for ax in range(1, mesh.d):
                lin = lin * int(counts[ax]) + raw[:, ax]
            pos = np.searchsorted(lin_sorted, lin)
            ok = (pos < lin_sorted.shape[0])
            ok[ok] &= lin_sorted[pos[ok]] == lin[ok]
            ok &= remaining
            if not ok.any():
                continue
            local = (pts[ok] - (lower + h * raw[ok])) / h
            v = eval_batch(vals_sorted[pos[ok]], local[:, None, :])[:, 0]
            out[ok] = v
            remaining &= ~ok
        return out

    def predict(self, X) -> np.ndarray:
        """Sign classification: -1 inside the estimated sublevel set (f <= 0), +1 outside."""
        values = self.decision_function(X)
        return np.where(values <= 0.0, -1, 1).astype(np.int8)

    def extract(self) -> LevelSetGeometry:
        """Geometry of the estimated zero level set (d in {2, 3})."""
        self._check_fitted()
        return extract_levelset(self.mesh_)
