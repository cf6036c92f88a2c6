"""Dyadic box-cell geometry: uniform tessellations, refinement, partition checks.

Cells are identified by (level, integer multi-index) so that partition logic is
exact in index space; floating point only enters when a cell is materialized as
a box.  A cell at level l has size h0 * 2**-l along every axis, and index[i]
ranges over [0, n_i * 2**l) where n_i is the number of level-0 cells on axis i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ._validation import as_point, check_int, check_scalar

__all__ = [
    "Domain",
    "Cell",
    "AdaptiveMesh",
    "PartitionReport",
    "corner_offsets",
    "uniform_tessellation",
    "refine_cell",
    "cell_vertices",
    "validate_partition",
]


def corner_offsets(d: int) -> np.ndarray:
    """(2**d, d) array of 0/1 corner offsets; axis 0 varies fastest.

    For d=2 the order is (0,0), (1,0), (0,1), (1,1).  All vertex-value vectors
    in this package follow this ordering.
    """
    n = 1 << d
    j = np.arange(n, dtype=np.int64)
    return ((j[:, None] >> np.arange(d, dtype=np.int64)[None, :]) & 1).astype(np.int64)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box domain."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("domain lower and upper must have the same length")
        if len(lo) < 1:
            raise ValueError("domain dimension must be >= 1")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not b > a:
                raise ValueError(f"domain axis {i}: upper ({b}) must exceed lower ({a})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=np.float64) - np.asarray(self.lower, dtype=np.float64)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=np.float64)

    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=np.float64)

    def base_counts(self, h0: float) -> np.ndarray:
        """Level-0 cell counts per axis; errors if h0 does not divide an extent."""
        h0 = check_scalar(h0, "h0", exclusive_minimum=0.0)
        counts = np.empty(self.d, dtype=np.int64)
        for i, ext in enumerate(self.extents):
            n = ext / h0
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ValueError(
                    f"domain extent on axis {i} ({ext}) is not an integer multiple of h0={h0}"
                )
            counts[i] = int(round(n))
        return counts


@dataclass(frozen=True)
class Cell:
    """A dyadic box cell: identity is (level, index); size/origin are derived."""

    level: int
    index: tuple[int, ...]
    size: float = field(compare=False)
    origin: tuple[float, ...] = field(compare=False)

    @property
    def d(self) -> int:
        return len(self.index)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=np.float64)
        return lo, lo + self.size

    def contains(self, x) -> bool:
        p = as_point(x, self.d)
        lo, hi = self.box()
        return bool(np.all(p >= lo) and np.all(p <= hi))


def _make_cell(level: int, index: np.ndarray, h0: float, lower: np.ndarray) -> Cell:
    size = h0 * 2.0 ** (-level)
    origin = lower + size * np.asarray(index, dtype=np.float64)
    return Cell(level=int(level), index=tuple(int(i) for i in index),
                size=size, origin=tuple(float(v) for v in origin))


class AdaptiveMesh:
    """A leaf-only partition of a box domain into dyadic cells.

    Cells are stored per level as integer index arrays (and optional per-cell
    vertex-value arrays), which keeps large meshes compact and lets geometry
    and metrics operate on whole levels at once.
    """

    def __init__(self, domain: Domain, base_size: float):
        self.domain = domain
        self.base_size = check_scalar(base_size, "base_size", exclusive_minimum=0.0)
        self.base_counts = domain.base_counts(self.base_size)
        # level -> (indices (n, d) int64, values (n, 2**d) float64 or None)
        self._levels: dict[int, tuple[np.ndarray, np.ndarray | None]] = {}

    # -- construction ------------------------------------------------------

    def add_level(self, level: int, indices: np.ndarray,
                  values: np.ndarray | None = None) -> None:
        level = check_int(level, "level", minimum=0)
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.domain.d:
            raise ValueError(f"indices must have shape (n, {self.domain.d})")
        limit = self.base_counts * (1 << level)
        if idx.size and (idx.min() < 0 or np.any(idx >= limit[None, :])):
            raise ValueError(f"cell index out of range for level {level}")
        if values is not None:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (idx.shape[0], 1 << self.domain.d):
                raise ValueError("values must have shape (n_cells, 2**d)")
        if level in self._levels:
            old_idx, old_val = self._levels[level]
            idx = np.concatenate([old_idx, idx], axis=0)
            if (old_val is None) != (values is None):
                raise ValueError("cannot mix cells with and without vertex values at one level")
            if values is not None:
                values = np.concatenate([old_val, values], axis=0)
        self._levels[level] = (idx, values)

    def sort_canonical(self) -> None:
        """Order cells by index (lexicographic) within each level."""
        for level, (idx, val) in list(self._levels.items()):
            if idx.shape[0] <= 1:
                continue
            order = np.lexsort(idx.T[::-1])
            self._levels[level] = (idx[order], None if val is None else val[order])

    # -- views -------------------------------------------------------------

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def levels(self) -> list[int]:
        return sorted(self._levels)

    def level_arrays(self, level: int) -> tuple[np.ndarray, np.ndarray | None]:
        return self._levels[level]

    def level_counts(self) -> dict[int, int]:
        return {lvl: self._levels[lvl][0].shape[0] for lvl in self.levels}

    @property
    def n_cells(self) -> int:
        return sum(idx.shape[0] for idx, _ in self._levels.values())

    def cell_size(self, level: int) -> float:
        return self.base_size * 2.0 ** (-level)

    @property
    def cells(self) -> Iterator[Cell]:
        """Iterate leaf cells (sorted by level then construction order)."""
        lower = self.domain.lower_array()
        for level in self.levels:
            idx, _ = self._levels[level]
            for row in idx:
                yield _make_cell(level, row, self.base_size, lower)

    def has_values(self) -> bool:
        return all(val is not None for _, val in self._levels.values())

    def equals(self, other: "AdaptiveMesh") -> bool:
        """Exact (bitwise) equality of domain, levels, indices and values."""
        if self.domain != other.domain or self.base_size != other.base_size:
            return False
        if self.levels != other.levels:
            return False
        for lvl in self.levels:
            ia, va = self._levels[lvl]
            ib, vb = other._levels[lvl]
            if ia.shape != ib.shape or not np.array_equal(ia, ib):
                return False
            if (va is None) != (vb is None):
                return False
            if va is not None and not np.array_equal(va, vb):
                return False
        return True


def uniform_tessellation(domain: Domain, level: int, h0: float) -> AdaptiveMesh:
    """Partition the domain into congruent cells of size h0 * 2**-level.

    The domain extents must be integer multiples of h0 on every axis.
    """
    level = check_int(level, "level", minimum=0)
    mesh = AdaptiveMesh(domain, h0)
    counts = mesh.base_counts * (1 << level)
    grids = np.meshgrid(*[np.arange(c, dtype=np.int64) for c in counts], indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    mesh.add_level(level, idx)
    mesh.sort_canonical()
    return mesh


def refine_cell(cell: Cell) -> list[Cell]:
    """Split a cell into its 2**d dyadic children, tiling the parent exactly."""
    offs = corner_offsets(cell.d)
    child_size = cell.size / 2.0
    parent_idx = np.asarray(cell.index, dtype=np.int64)
    children = []
    for off in offs:
        idx = parent_idx * 2 + off
        origin = np.asarray(cell.origin, dtype=np.float64) + child_size * off
        children.append(Cell(level=cell.level + 1, index=tuple(int(i) for i in idx),
                             size=child_size, origin=tuple(float(v) for v in origin)))
    return children


def refine_indices(indices: np.ndarray, d: int) -> np.ndarray:
    """Vectorized dyadic refinement: (n, d) parent indices -> (n * 2**d, d) children."""
    offs = corner_offsets(d)
    children = indices[:, None, :] * 2 + offs[None, :, :]
    return children.reshape(-1, d)


def cell_vertices(cell: Cell) -> np.ndarray:
    """The 2**d corner coordinates of the cell box, in corner_offsets order."""
    offs = corner_offsets(cell.d).astype(np.float64)
    return np.asarray(cell.origin, dtype=np.float64)[None, :] + cell.size * offs


def vertex_coords(indices: np.ndarray, level: int, h0: float,
                  lower: np.ndarray) -> np.ndarray:
    """Vertex coordinates for a batch of cells: (n, 2**d, d)."""
    d = indices.shape[1]
    h = h0 * 2.0 ** (-level)
    offs = corner_offsets(d)
    return lower[None, None, :] + h * (indices[:, None, :] + offs[None, :, :]).astype(np.float64)


@dataclass
class PartitionReport:
    ok: bool
    n_cells: int
    volume_discrepancy: float
    overlapping: list[tuple[int, tuple[int, ...]]]
    missing_volume_fraction: float

    def __str__(self) -> str:
        if self.ok:
            return (f"partition OK: {self.n_cells} cells, "
                    f"relative volume discrepancy {self.volume_discrepancy:.3e}")
        lines = [f"partition INVALID ({self.n_cells} cells)"]
        if self.overlapping:
            shown = ", ".join(f"L{l}:{i}" for l, i in self.overlapping[:8])
            more = "" if len(self.overlapping) <= 8 else f" (+{len(self.overlapping) - 8} more)"
            lines.append(f"  overlapping cells: {shown}{more}")
        if self.missing_volume_fraction > 0:
            lines.append(f"  uncovered volume fraction: {self.missing_volume_fraction:.3e}")
        return "\n".join(lines)


def _morton_interleave(local: np.ndarray, level: int) -> np.ndarray:
    """Z-order code of within-ancestor coordinates; descendants of a dyadic
    cell occupy one contiguous Morton range, which row-major ids do not."""
    d = local.shape[1]
    code = np.zeros(local.shape[0], dtype=np.int64)
    for bit in range(level):
        for ax in range(d):
            code |= ((local[:, ax] >> bit) & 1) << (bit * d + ax)
    return code


def validate_partition(mesh: AdaptiveMesh) -> PartitionReport:
    """Check disjointness and coverage of a mesh, exactly in index space.

    Every leaf maps to the Morton-order interval of finest-level cells it
    covers (within its level-0 ancestor); sorted intervals must tile
    [0, total) with no overlap.
    """
    levels = mesh.levels
    if not levels:
        return PartitionReport(False, 0, 1.0, [], 1.0)
    finest = max(levels)
    base = mesh.base_counts
    n_base = int(np.prod(base.astype(object)))
    per_base = 1 << (mesh.d * finest)
    total = n_base * per_base
    if per_base.bit_length() + n_base.bit_length() >= 62:
        raise ValueError("mesh too deep for exact 64-bit partition validation")

    starts = []
    spans = []
    ids = []
    for lvl in levels:
        idx, _ = mesh.level_arrays(lvl)
        ancestor = idx >> lvl                     # level-0 ancestor per axis
        local = idx - (ancestor << lvl)           # position inside the ancestor
        anc_lin = ancestor[:, 0].astype(np.int64).copy()
        for ax in range(1, mesh.d):
            anc_lin = anc_lin * int(base[ax]) + ancestor[:, ax]
        span = 1 << (mesh.d * (finest - lvl))
        start = anc_lin * per_base + _morton_interleave(local, lvl) * span
        starts.append(start)
        spans.append(np.full(idx.shape[0], span, dtype=np.int64))
        ids.extend((lvl, tuple(int(v) for v in row)) for row in idx)

    start = np.concatenate(starts)
    span = np.concatenate(spans)
    order = np.argsort(start, kind="stable")

    overlapping: list[tuple[int, tuple[int, ...]]] = []
    covered = 0
    cursor = 0
    for k in order:
        s, w = int(start[k]), int(span[k])
        if s < cursor:
            overlapping.append(ids[k])
        else:
            covered += w
        cursor = max(cursor, s + w)

    missing = (total - covered) / total
    vol = sum(
        mesh.level_arrays(lvl)[0].shape[0] * mesh.cell_size(lvl) ** mesh.d
        for lvl in levels
    )
    disc = abs(vol - mesh.domain.volume) / mesh.domain.volume
    ok = not overlapping and covered == total and disc <= 1e-12
    return PartitionReport(ok, mesh.n_cells, disc, overlapping, max(0.0, missing))
