"""Per-cell multilinear approximation and the refinement decision variable.

Each cell carries an independent interpolant through its 2**d noisy corner
samples (no value sharing across faces, so the global approximation is
discontinuous and noise stays independent between cells).  Because a
multilinear function attains its extrema at the cell corners, the infimum of
|approximant| over the cell is available in closed form from the vertex
values, which is what the decision variable needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_point_array
from .grid import Cell, cell_vertices, corner_offsets

__all__ = [
    "LocalApproximant",
    "DecisionVariable",
    "fit_local",
    "eval_local",
    "cell_abs_min",
    "decision_variable",
    "multilinear_weights",
    "eval_batch",
    "abs_min_batch",
]


def multilinear_weights(u: np.ndarray, d: int) -> np.ndarray:
    """Tensor-product linear blend weights.

    u has shape (..., d) with entries in [0, 1] (local cell coordinates);
    the result has shape (..., 2**d), ordered like grid.corner_offsets.
    """
    offs = corner_offsets(d)  # (N, d)
    u = np.asarray(u, dtype=np.float64)
    # w[..., j] = prod_i (u_i if offs[j,i] else 1 - u_i)
    w = np.where(offs[(None,) * (u.ndim - 1)].astype(bool), u[..., None, :], 1.0 - u[..., None, :])
    return np.prod(w, axis=-1)


@dataclass(frozen=True)
class LocalApproximant:
    """Multilinear interpolant of one cell's vertex samples."""

    cell: Cell
    vertex_values: tuple[float, ...] = field(compare=True)

    def __post_init__(self):
        n = 1 << self.cell.d
        vals = tuple(float(v) for v in self.vertex_values)
        if len(vals) != n:
            raise ValueError(f"expected {n} vertex values for d={self.cell.d}, got {len(vals)}")
        object.__setattr__(self, "vertex_values", vals)

    def __call__(self, x) -> np.ndarray | float:
        return eval_local(self, x)


def fit_local(cell: Cell, samples) -> LocalApproximant:
    """Fit the cell's multilinear interpolant through its vertex samples.

    samples follow grid.corner_offsets order (as produced by cell_vertices).
    The fit is linear in the samples, so scaled/summed sample vectors map to
    scaled/summed interpolants.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.shape[0] != (1 << cell.d):
        raise ValueError(
            f"expected {1 << cell.d} samples for a {cell.d}-dimensional cell, "
            f"got {samples.shape[0]}"
        )
    return LocalApproximant(cell=cell, vertex_values=tuple(samples.tolist()))


def eval_local(approx: LocalApproximant, x) -> np.ndarray | float:
    """Evaluate the interpolant at point(s) inside the closed cell."""
    cell = approx.cell
    X = as_point_array(x, cell.d)
    lo, hi = cell.box()
    eps = 1e-12 * cell.size
    if np.any(X < lo - eps) or np.any(X > hi + eps):
        raise ValueError(f"point outside cell box [{lo.tolist()}, {hi.tolist()}]")
    u = np.clip((X - lo) / cell.size, 0.0, 1.0)
    w = multilinear_weights(u, cell.d)
    vals = w @ np.asarray(approx.vertex_values, dtype=np.float64)
    if np.ndim(x) == 1 or (np.ndim(x) == 0):
        return float(vals[0])
    return vals


def cell_abs_min(approx: LocalApproximant) -> float:
    """inf over the cell of |approximant|, exactly.

    Zero when the vertex values change sign or touch zero (a multilinear
    function attains its extrema at vertices, so any interior sign change
    forces a vertex sign change); otherwise the smallest vertex magnitude.
    """
    v = np.asarray(approx.vertex_values, dtype=np.float64)
    if v.min() <= 0.0 <= v.max():
        return 0.0
    return float(np.abs(v).min())


@dataclass(frozen=True)
class DecisionVariable:
    """Cell uncertainty score: distance-to-level-set over local accuracy."""

    value: float
    cell_min_abs: float
    h_pow_alpha: float


def decision_variable(approx: LocalApproximant, alpha: float) -> DecisionVariable:
    """The refinement decision variable: inf|approximant| / h**alpha.

    Small values flag cells that either straddle the target level set or are
    too inaccurate to rule it out.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    h_pow = approx.cell.size ** float(alpha)
    cam = cell_abs_min(approx)
    return DecisionVariable(value=cam / h_pow, cell_min_abs=cam, h_pow_alpha=h_pow)


# -- vectorized batch forms used by the driver and the metrics --------------

def eval_batch(values: np.ndarray, local_coords: np.ndarray) -> np.ndarray:
    """Evaluate many cells' interpolants at per-cell local points.

    values: (n_cells, 2**d) vertex values; local_coords: (n_cells, m, d) in
    [0, 1].  Returns (n_cells, m).  d = 2 and d = 3 use fused per-axis blends
    (hot path for error measurement); other dimensions fall back to the
    tensor-product weights.
    """
    d = local_coords.shape[-1]
    V = values[:, :, None] if values.ndim == 2 else values
    if d == 2:
        u = local_coords[..., 0]
        v = local_coords[..., 1]
        bottom = V[:, 0] + (V[:, 1] - V[:, 0]) * u
        top = V[:, 2] + (V[:, 3] - V[:, 2]) * u
        return bottom + (top - bottom) * v
    if d == 3:
        u = local_coords[..., 0]
        v = local_coords[..., 1]
        w = local_coords[..., 2]
        c00 = V[:, 0] + (V[:, 1] - V[:, 0]) * u
        c10 = V[:, 2] + (V[:, 3] - V[:, 2]) * u
        c01 = V[:, 4] + (V[:, 5] - V[:, 4]) * u
        c11 = V[:, 6] + (V[:, 7] - V[:, 6]) * u
        c0 = c00 + (c10 - c00) * v
        c1 = c01 + (c11 - c01) * v
        return c0 + (c1 - c0) * w
    w = multilinear_weights(local_coords, d)          # (n, m, N)
    return np.einsum("nmj,nj->nm", w, values)


def abs_min_batch(values: np.ndarray) -> np.ndarray:
    """cell_abs_min for a batch of vertex-value rows: (n_cells,) array."""
    vmin = values.min(axis=1)
    vmax = values.max(axis=1)
    out = np.abs(values).min(axis=1)
    out[(vmin <= 0.0) & (vmax >= 0.0)] = 0.0
    return out


def vertices_of(approx: LocalApproximant) -> np.ndarray:
    return cell_vertices(approx.cell)
