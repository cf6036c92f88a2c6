"""Sign-mismatch error measurement and its statistics over independent runs.

The error of a fitted mesh against an analytic truth is the volume of the
region where truth and approximant disagree about the sign (values <= 0 count
as inside).  It is estimated cell by cell with the same randomized points, so
per-cell contributions sum exactly to the global estimate.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.stats import qmc

from ._validation import check_int
from .approx import eval_batch
from .grid import AdaptiveMesh, Cell
from .oracles import EvaluationOracle
from .refine import RunConfig, run_adaptive
from .streams import Tag, chain, derive_key, uniforms

__all__ = [
    "ErrorEstimate",
    "generate_cell_points",
    "sign_mismatch_error",
    "expected_error",
    "fit_loglog_slope",
]

_POINT_FAMILY = "sobol-cranley-patterson"  # recorded in output metadata

_CHUNK_POINTS = 2_000_000


@dataclass(frozen=True)
class ErrorEstimate:
    """Mean sign-mismatch error over independent runs, with its standard error."""

    mean: float
    std_error: float
    n_runs: int
    points_per_cell: int
    values: tuple[float, ...] = ()
    work_mean: float = float("nan")
    leaf_cells_mean: float = float("nan")


def _base_points(n: int, d: int, key: np.ndarray) -> np.ndarray:
    """One scrambled digital net in [0, 1)**d shared by all cells of a run."""
    seed = int(chain(key, Tag.QMC_BASE)[()] & np.uint64(0x7FFFFFFF))
    engine = qmc.Sobol(d=d, scramble=True, seed=seed)
    m = max(0, math.ceil(math.log2(max(1, n))))
    if (1 << m) == n:
        pts = engine.random_base2(m=m)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # off-power-of-2 balance note
            pts = engine.random(n)
    return np.asarray(pts, dtype=np.float64)


def _cell_shifts(key: np.ndarray, level: int, indices: np.ndarray) -> np.ndarray:
    """Per-cell Cranley-Patterson rotation offsets in [0, 1)**d."""
    d = indices.shape[1]
    k = chain(chain(key, Tag.POINT_SHIFT), level)
    for ax in range(d):
        k = chain(k, indices[:, ax])
    axes = np.arange(d, dtype=np.int64)
    return uniforms(chain(k[:, None], axes[None, :]))


def local_points(key: np.ndarray, level: int, indices: np.ndarray, n: int,
                 base: np.ndarray | None = None) -> np.ndarray:
    """Randomized low-discrepancy points per cell, in local [0, 1) coordinates.

    A single scrambled Sobol set is rotated modulo 1 by a keyed per-cell
    shift, so the family stays low-discrepancy while distinct cells receive
    independent randomizations; shape (n_cells, n, d).
    """
    d = indices.shape[1]
    if base is None:
        base = _base_points(n, d, key)
    shifts = _cell_shifts(key, level, indices)
    pts = base[None, :, :] + shifts[:, None, :]
    np.mod(pts, 1.0, out=pts)
    return pts


def generate_cell_points(cell: Cell, n: int, key) -> np.ndarray:
    """n randomized quasi-Monte Carlo points inside the closed cell.

    Deterministic given (cell identity, n, key); matches the batched points
    used by sign_mismatch_error for the same key.
    """
    n = check_int(n, "n", minimum=1)
    key = np.asarray(key, dtype=np.uint64)
    idx = np.asarray(cell.index, dtype=np.int64)[None, :]
    local = local_points(key, cell.level, idx, n)[0]
    return np.asarray(cell.origin, dtype=np.float64)[None, :] + cell.size * local


def sign_mismatch_error(mesh: AdaptiveMesh, truth: Callable[[np.ndarray], np.ndarray],
                        n_points: int, key, *, return_per_cell: bool = False,
                        workers: int = 1):
    """Monte Carlo estimate of the sign-disagreement volume between truth and mesh.

    Per cell: (cell volume) * (fraction of points where the inside indicators
    of truth and approximant differ), summed over all leaf cells.  Values <= 0
    are inside.  Every leaf must carry vertex values.  Points are keyed per
    cell, so chunking and worker count never change the estimate.
    """
    n_points = check_int(n_points, "n_points", minimum=1)
    if not mesh.has_values():
        raise ValueError("mesh has leaves without fitted vertex values")
    key = np.asarray(derive_key(0, Tag.CELL_POINTS) if key is None else key, dtype=np.uint64)
    d = mesh.d
    lower = mesh.domain.lower_array()
    base = _base_points(n_points, d, key)

    per_cell_chunks = []
    total = 0.0
    cells_per_chunk = max(1, _CHUNK_POINTS // n_points)
    for level in mesh.levels:
        idx, vals = mesh.level_arrays(level)
        h = mesh.cell_size(level)
        vol = h**d
        level_err = np.empty(idx.shape[0], dtype=np.float64)

        def work(sl: slice) -> None:
            sub_idx = idx[sl]
            local = local_points(key, level, sub_idx, n_points, base=base)
            a_vals = eval_batch(vals[sl], local)
            # reuse the local-coordinate buffer as world coordinates
            local += sub_idx[:, None, :]
            local *= h
            local += lower[None, None, :]
            t_vals = np.asarray(truth(local.reshape(-1, d)), dtype=np.float64)
            mism = (t_vals.reshape(a_vals.shape) <= 0.0) != (a_vals <= 0.0)
            level_err[sl] = vol * mism.mean(axis=1)

        slices = [slice(s, min(s + cells_per_chunk, idx.shape[0]))
                  for s in range(0, idx.shape[0], cells_per_chunk)]
        if workers > 1 and len(slices) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, slices))
        else:
            for sl in slices:
                work(sl)
        per_cell_chunks.append((level, level_err))
        total += float(np.sum(level_err))

    if return_per_cell:
        return total, per_cell_chunks
    return total


def expected_error(cfg: RunConfig, oracle_factory, truth: Callable,
                   n_runs: int = 10, n_points: int = 512, *,
                   uniform: bool = False, workers: int = 1) -> ErrorEstimate:
    """Mean and standard error of the sign-mismatch error over independent runs.

    Each run derives its own seed (and hence independent oracle noise and
    measurement points) from cfg.seed and the run index.  oracle_factory may
    be an oracle instance (shared across runs) or a callable run_index ->
    oracle.
    """
    n_runs = check_int(n_runs, "n_runs", minimum=1)
    errors = np.empty(n_runs, dtype=np.float64)
    works = np.empty(n_runs, dtype=np.float64)
    leaves = np.empty(n_runs, dtype=np.float64)
    # one measurement key for the whole batch: identical meshes (deterministic
    # oracles) then measure identically, giving exactly zero spread
    mkey = derive_key(cfg.seed, Tag.CELL_POINTS)
    for i in range(n_runs):
        run_seed = int(derive_key(cfg.seed, Tag.RUN_SEED, i)[()] >> np.uint64(1))
        run_cfg = replace(cfg, seed=run_seed)
        oracle = oracle_factory(i) if callable(oracle_factory) and not isinstance(
            oracle_factory, EvaluationOracle) else oracle_factory
        result = run_adaptive(run_cfg, oracle, uniform=uniform,
                              workers=workers, keep_tree=False)
        mesh = result.mesh()
        errors[i] = sign_mismatch_error(mesh, truth, n_points, mkey, workers=workers)
        works[i] = result.ledger.total_cost
        leaves[i] = mesh.n_cells
    mean = float(errors.mean())
    std_error = float(errors.std(ddof=1) / math.sqrt(n_runs)) if n_runs >= 2 else math.nan
    return ErrorEstimate(mean=mean, std_error=std_error, n_runs=n_runs,
                         points_per_cell=n_points, values=tuple(errors.tolist()),
                         work_mean=float(works.mean()),
                         leaf_cells_mean=float(leaves.mean()))


def fit_loglog_slope(pairs) -> tuple[float, float]:
    """Least-squares line through (log x, log y); returns (slope, intercept)."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (x, y) pairs")
    if np.any(arr <= 0.0):
        raise ValueError("log-log fit requires strictly positive coordinates")
    lx = np.log(arr[:, 0])
    ly = np.log(arr[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)
