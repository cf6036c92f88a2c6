"""Zero level-set geometry extraction from the per-cell multilinear approximants.

Each leaf cell whose vertex values change sign (values <= 0 count as inside)
is contoured independently with the standard corner-sign case tables; crossing
points are placed by linear interpolation along cell edges, which is exact
because a multilinear function is affine along every axis-aligned edge.  The
union of per-cell pieces may be discontinuous across cell faces, exactly like
the approximants themselves.

Ambiguous configurations (the 2D saddle, 3D faces whose corners alternate in
sign) are resolved by the sign of the approximant at the face or cell center,
so extraction follows the multilinear function rather than a fixed convention;
3D configurations whose face tests disagree keep the standard triangulation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._mc_tables import EDGE_TABLE, TRI_TABLE
from .grid import AdaptiveMesh

__all__ = [
    "LevelSetGeometry",
    "extract_levelset",
    "export_geometry",
    "read_segments_csv",
    "endpoint_residuals",
]


# -- 2D marching squares (our corner order: (0,0), (1,0), (0,1), (1,1)) ------

_SQ_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
_SQ_EDGES = ((0, 1), (1, 3), (2, 3), (0, 2))  # bottom, right, top, left
_B, _R, _T, _L = 0, 1, 2, 3

# case id = sum(1 << corner for inside corners); saddles (6, 9) handled apart
_SQ_SEGMENTS: dict[int, tuple[tuple[int, int], ...]] = {
    0: (), 15: (),
    1: ((_B, _L),), 14: ((_B, _L),),
    2: ((_B, _R),), 13: ((_B, _R),),
    4: ((_L, _T),), 11: ((_L, _T),),
    8: ((_R, _T),), 7: ((_R, _T),),
    3: ((_L, _R),), 12: ((_L, _R),),
    5: ((_B, _T),), 10: ((_B, _T),),
}


# -- 3D marching cubes (classic corner and edge numbering) -------------------

_MC_CORNERS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=np.float64)
_MC_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
             (0, 4), (1, 5), (2, 6), (3, 7))
# map classic corner id -> our corner_offsets position
_OURS_FOR_CLASSIC = (0, 1, 3, 2, 4, 5, 7, 6)
# cube faces: (cyclic corner quad, the 4 boundary edge ids on that face)
_MC_FACES = (
    ((0, 1, 2, 3), (0, 1, 2, 3)),
    ((4, 5, 6, 7), (4, 5, 6, 7)),
    ((0, 1, 5, 4), (0, 9, 4, 8)),
    ((3, 2, 6, 7), (2, 10, 6, 11)),
    ((0, 3, 7, 4), (3, 11, 7, 8)),
    ((1, 2, 6, 5), (1, 10, 5, 9)),
)


@dataclass
class LevelSetGeometry:
    """Per-cell zero level-set pieces: segments (d=2) or triangles (d=3).

    pieces has shape (m, 2, 2) or (m, 3, 3); source_levels/source_indices tag
    each piece with the leaf cell it came from.
    """

    d: int
    pieces: np.ndarray
    source_levels: np.ndarray
    source_indices: np.ndarray

    @property
    def n_pieces(self) -> int:
        return self.pieces.shape[0]

    def equals(self, other: "LevelSetGeometry") -> bool:
        return (self.d == other.d
                and np.array_equal(self.pieces, other.pieces)
                and np.array_equal(self.source_levels, other.source_levels)
                and np.array_equal(self.source_indices, other.source_indices))


def _edge_crossing(p0, p1, v0: float, v1: float) -> np.ndarray:
    t = v0 / (v0 - v1)
    return p0 + t * (p1 - p0)


def _square_segments(values: np.ndarray) -> list[np.ndarray]:
    inside = values <= 0.0
    case = int(np.sum(1 << np.nonzero(inside)[0]))
    if case in (0, 15):
        return []
    if case in (6, 9):
        # saddle: the bilinear's center value picks the pairing
        center_inside = float(values.mean()) <= 0.0
        if case == 6:  # corners (1,0) and (0,1) inside
            pairs = ((_B, _L), (_R, _T)) if center_inside else ((_B, _R), (_L, _T))
        else:          # corners (0,0) and (1,1) inside
            pairs = ((_B, _R), (_L, _T)) if center_inside else ((_B, _L), (_R, _T))
    else:
        pairs = _SQ_SEGMENTS[case]
    crossings = {}
    for e, (a, b) in enumerate(_SQ_EDGES):
        if inside[a] != inside[b]:
            crossings[e] = _edge_crossing(_SQ_CORNERS[a], _SQ_CORNERS[b],
                                          values[a], values[b])
    return [np.stack([crossings[e1], crossings[e2]]) for e1, e2 in pairs]


def _face_pairing_separates(triangles: list[tuple[int, int, int]],
                            face_edges: tuple[int, ...],
                            corner_edges: tuple[int, int]) -> bool:
    """True when the triangulation's chords on this face isolate each inside corner."""
    face_set = set(face_edges)
    chords = set()
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            if a in face_set and b in face_set and a != b:
                chords.add(frozenset((a, b)))
    return frozenset(corner_edges) in chords


def _cube_triangles(values_ours: np.ndarray) -> list[tuple[int, int, int]]:
    vals = values_ours[list(_OURS_FOR_CLASSIC)]
    inside = vals <= 0.0
    idx = int(np.sum(1 << np.nonzero(inside)[0]))
    if EDGE_TABLE[idx] == 0:
        return []

    def tris_of(i: int) -> list[tuple[int, int, int]]:
        flat = TRI_TABLE[i]
        return [(flat[k], flat[k + 1], flat[k + 2]) for k in range(0, len(flat), 3)]

    standard = tris_of(idx)
    ambiguous = []
    for quad, face_edges in _MC_FACES:
        q_in = inside[list(quad)]
        if q_in[0] == q_in[2] and q_in[1] == q_in[3] and q_in[0] != q_in[1]:
            ins = (quad[0], quad[2]) if q_in[0] else (quad[1], quad[3])
            want_connected = float(vals[list(quad)].mean()) <= 0.0
            ambiguous.append((quad, face_edges, ins, want_connected))
    if not ambiguous:
        return standard

    complement = tris_of(idx ^ 0xFF)

    def score(tris: list[tuple[int, int, int]]) -> int:
        good = 0
        for quad, face_edges, ins, want_connected in ambiguous:
            # edges incident to the first inside corner on this face
            inc = tuple(e for e in face_edges
                        if ins[0] in _MC_EDGES[e])
            separated = _face_pairing_separates(tris, face_edges, inc)
            good += int(separated != want_connected)
        return good

    s_std, s_cmp = score(standard), score(complement)
    return complement if s_cmp > s_std else standard


def extract_levelset(mesh: AdaptiveMesh) -> LevelSetGeometry:
    """Contour every sign-changing leaf cell of a fitted mesh.

    Supports d in {2, 3} (meshes of any dimension exist; only geometry output
    is dimension-limited).  Output ordering is canonical: cells sorted by
    (level, index), pieces in case-table order within a cell.
    """
    d = mesh.d
    if d not in (2, 3):
        raise ValueError(f"level-set geometry extraction supports d in {{2, 3}}, got d={d}")
    if not mesh.has_values():
        raise ValueError("mesh has leaves without fitted vertex values")
    mesh.sort_canonical()

    pieces = []
    src_lvl = []
    src_idx = []
    lower = mesh.domain.lower_array()
    for level in mesh.levels:
        idx, vals = mesh.level_arrays(level)
        h = mesh.cell_size(level)
        changing = (vals.min(axis=1) <= 0.0) & (vals.max(axis=1) > 0.0)
        for row in np.nonzero(changing)[0]:
            origin = lower + h * idx[row]
            if d == 2:
                local = _square_segments(vals[row])
            else:
                tris = _cube_triangles(vals[row])
                local = []
                crossings = {}
                v_classic = vals[row][list(_OURS_FOR_CLASSIC)]
                inside = v_classic <= 0.0
                for e, (a, b) in enumerate(_MC_EDGES):
                    if inside[a] != inside[b]:
                        crossings[e] = _edge_crossing(_MC_CORNERS[a], _MC_CORNERS[b],
                                                      v_classic[a], v_classic[b])
                for tri in tris:
                    local.append(np.stack([crossings[e] for e in tri]))
            for piece in local:
                pieces.append(origin[None, :] + h * piece)
                src_lvl.append(level)
                src_idx.append(idx[row])

    if pieces:
        arr = np.stack(pieces)
        levels = np.asarray(src_lvl, dtype=np.int64)
        indices = np.stack(src_idx).astype(np.int64)
    else:
        arr = np.zeros((0, d, d), dtype=np.float64)
        levels = np.zeros(0, dtype=np.int64)
        indices = np.zeros((0, d), dtype=np.int64)
    return LevelSetGeometry(d=d, pieces=arr, source_levels=levels, source_indices=indices)


def endpoint_residuals(geom: LevelSetGeometry, mesh: AdaptiveMesh) -> np.ndarray:
    """|approximant| at every emitted point, scaled by its cell's max |vertex value|.

    Shape (n_pieces, d); extraction guarantees entries <= 1e-9 (they are zero
    up to rounding because crossings lie on cell edges).
    """
    from .approx import eval_batch

    lower = mesh.domain.lower_array()
    lookup = {}
    for level in mesh.levels:
        idx, vals = mesh.level_arrays(level)
        lookup[level] = {tuple(map(int, r)): vals[k] for k, r in enumerate(idx)}
    out = np.empty(geom.pieces.shape[:2], dtype=np.float64)
    for i in range(geom.n_pieces):
        level = int(geom.source_levels[i])
        vals = lookup[level][tuple(map(int, geom.source_indices[i]))]
        h = mesh.cell_size(level)
        origin = lower + h * geom.source_indices[i]
        local = (geom.pieces[i] - origin[None, :]) / h
        fhat = eval_batch(vals[None, :], local[None, :, :])[0]
        out[i] = np.abs(fhat) / max(np.abs(vals).max(), np.finfo(float).tiny)
    return out


def export_geometry(geom: LevelSetGeometry, path, fmt: str,
                    metadata: dict | None = None) -> None:
    """Write geometry as segments-csv (any supported d) or OBJ (d=3 only).

    segments-csv: one row per piece, flattened point coordinates then the
    source cell (level, index...); header always present, full-precision
    floats.  OBJ: shared-nothing triangle soup (v/f records), metadata as
    leading comments.
    """
    if fmt not in ("segments-csv", "obj"):
        raise ValueError(f"unknown geometry format {fmt!r}")
    if fmt == "obj" and geom.d != 3:
        raise ValueError("obj export requires 3-dimensional geometry")

    meta_lines = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    if fmt == "segments-csv":
        pts = geom.pieces.shape[1] if geom.n_pieces else geom.d
        coord_names = "xyz"[:geom.d]
        header = [f"{c}{k + 1}" for k in range(pts) for c in coord_names]
        header += ["level"] + [f"index_{ax}" for ax in range(geom.d)]
        with open(path, "w", newline="") as fh:
            for line in meta_lines:
                fh.write(line + "\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(geom.n_pieces):
                row = [repr(float(v)) for v in geom.pieces[i].ravel()]
                row.append(str(int(geom.source_levels[i])))
                row += [str(int(v)) for v in geom.source_indices[i]]
                writer.writerow(row)
    else:
        with open(path, "w") as fh:
            for line in meta_lines:
                fh.write(line + "\n")
            for i in range(geom.n_pieces):
                for q in geom.pieces[i]:
                    fh.write(f"v {q[0]!r} {q[1]!r} {q[2]!r}\n")
            for i in range(geom.n_pieces):
                base = 3 * i
                fh.write(f"f {base + 1} {base + 2} {base + 3}\n")


def read_segments_csv(path) -> LevelSetGeometry:
    """Parse a segments-csv file back into geometry (inverse of export)."""
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    n_coord = len([h for h in header if h[0] in "xyz" and h not in ("level",)])
    d = len([h for h in header if h.startswith("index_")])
    pts = n_coord // d
    pieces, levels, indices = [], [], []
    for row in reader:
        coords = np.asarray([float(v) for v in row[:n_coord]], dtype=np.float64)
        pieces.append(coords.reshape(pts, d))
        levels.append(int(row[n_coord]))
        indices.append([int(v) for v in row[n_coord + 1:n_coord + 1 + d]])
    if pieces:
        arr = np.stack(pieces)
        lv = np.asarray(levels, dtype=np.int64)
        ix = np.asarray(indices, dtype=np.int64)
    else:
        arr = np.zeros((0, pts if pieces else d, d), dtype=np.float64)
        lv = np.zeros(0, dtype=np.int64)
        ix = np.zeros((0, d), dtype=np.int64)
    return LevelSetGeometry(d=d, pieces=arr, source_levels=lv, source_indices=ix)
