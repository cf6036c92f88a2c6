"""Serialization: mesh/checkpoint files, ledgers, sweep CSVs, and metadata.

All files embed the config hash and seed; rerunning with identical inputs
reproduces every output byte for byte except the `created` timestamp, which
is excluded from the hash.  Floats are written with full round-trip precision
(repr), so checkpoints restore runs exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .grid import AdaptiveMesh, Domain
from .refine import LevelVisit, RunConfig, RunResult, WorkLedger

__all__ = [
    "config_hash",
    "make_metadata",
    "write_mesh",
    "read_mesh",
    "write_checkpoint",
    "read_checkpoint",
    "write_ledger",
    "write_sweep_csv",
    "write_sweep_summary",
]

SWEEP_CSV_COLUMNS = ("L", "h_L", "mean_error", "std_error", "total_work", "n_cells")


def _encode_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _decode_float(v) -> float:
    return math.inf if v == "inf" else float(v)


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """Stable 16-hex-digit digest of a configuration mapping."""
    enc = {k: _encode_value(v) for k, v in config.items()}
    return hashlib.sha256(canonical_json(enc).encode()).hexdigest()[:16]


def make_metadata(config: dict, seed: int) -> dict:
    return {
        "config_hash": config_hash(config),
        "seed": int(seed),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "package_version": __version__,
    }


def _dump_json(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cell_records(mesh: AdaptiveMesh) -> list[dict]:
    records = []
    for level in mesh.levels:
        idx, vals = mesh.level_arrays(level)
        for k in range(idx.shape[0]):
            rec = {"level": int(level), "index": [int(v) for v in idx[k]]}
            if vals is not None:
                rec["values"] = [float(v) for v in vals[k]]
            records.append(rec)
    return records


def write_mesh(mesh: AdaptiveMesh, path, metadata: dict | None = None) -> None:
    """Mesh export: base size, domain bounds, one record per cell {level, index}.

    Records are sorted by level then index; vertex values are included when
    the mesh carries them.
    """
    mesh.sort_canonical()
    _dump_json({
        "format": "levelmesh-mesh",
        "version": 1,
        "meta": metadata or {},
        "domain": {"lower": list(mesh.domain.lower), "upper": list(mesh.domain.upper)},
        "base_size": mesh.base_size,
        "cells": _cell_records(mesh),
    }, path)


def read_mesh(path) -> AdaptiveMesh:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") not in ("levelmesh-mesh", "levelmesh-checkpoint"):
        raise ValueError(f"{path}: not a levelmesh mesh or checkpoint file")
    return _mesh_from_dict(data)


def _mesh_from_dict(data: dict) -> AdaptiveMesh:
    domain = Domain(lower=tuple(data["domain"]["lower"]),
                    upper=tuple(data["domain"]["upper"]))
    mesh = AdaptiveMesh(domain, data["base_size"])
    by_level: dict[int, tuple[list, list]] = {}
    for rec in data["cells"]:
        idxs, vals = by_level.setdefault(int(rec["level"]), ([], []))
        idxs.append(rec["index"])
        if "values" in rec:
            vals.append(rec["values"])
    for level, (idxs, vals) in sorted(by_level.items()):
        arr = np.asarray(idxs, dtype=np.int64)
        values = np.asarray(vals, dtype=np.float64) if vals else None
        if values is not None and values.shape[0] != arr.shape[0]:
            raise ValueError(f"level {level}: some cell records are missing values")
        mesh.add_level(level, arr, values)
    mesh.sort_canonical()
    return mesh


def _config_to_dict(cfg: RunConfig) -> dict:
    out = cfg.config_fields()
    for key in ("beta", "p"):
        out[key] = _encode_value(out[key])
    return out


def _config_from_dict(data: dict) -> RunConfig:
    return RunConfig(
        domain=Domain(lower=tuple(data["domain_lower"]), upper=tuple(data["domain_upper"])),
        h0=float(data["h0"]),
        max_level=int(data["max_level"]),
        alpha=float(data["alpha"]),
        beta=_decode_float(data["beta"]),
        p=_decode_float(data["p"]),
        R=None if data["R"] is None else float(data["R"]),
        c=float(data["c"]),
        M0=float(data["M0"]),
        seed=int(data["seed"]),
        base_level_override=(None if data.get("base_level_override") is None
                             else int(data["base_level_override"])),
    )


def write_checkpoint(result: RunResult, path, metadata: dict | None = None) -> None:
    """Full resumable state: mesh export plus refined-cell samples and ledger."""
    mesh = result.mesh()
    mesh.sort_canonical()
    tree = []
    for visit in result.visits:
        ref = visit.refined
        if ref.any():
            order = np.lexsort(visit.indices[ref].T[::-1])
            idx = visit.indices[ref][order]
            vals = visit.values[ref][order]
            for k in range(idx.shape[0]):
                tree.append({"level": int(visit.level),
                             "index": [int(v) for v in idx[k]],
                             "values": [float(v) for v in vals[k]]})
    _dump_json({
        "format": "levelmesh-checkpoint",
        "version": 1,
        "meta": metadata or {},
        "config": _config_to_dict(result.config),
        "uniform": result.uniform,
        "resumable": result.resumable,
        "domain": {"lower": list(mesh.domain.lower), "upper": list(mesh.domain.upper)},
        "base_size": mesh.base_size,
        "cells": _cell_records(mesh),
        "tree": tree,
        "ledger": result.ledger.to_dict(),
    }, path)


def read_checkpoint(path) -> RunResult:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != "levelmesh-checkpoint":
        raise ValueError(f"{path}: not a levelmesh checkpoint file")
    cfg = _config_from_dict(data["config"])
    d = cfg.d
    N = 1 << d

    per_level: dict[int, tuple[list, list, list]] = {}
    for rec, refined in [(r, False) for r in data["cells"]] + \
                        [(r, True) for r in data["tree"]]:
        if "values" not in rec:
            raise ValueError("checkpoint cell records must carry vertex values")
        if len(rec["values"]) != N:
            raise ValueError(
                f"corrupted cell record at level {rec['level']}, index {rec['index']}: "
                f"expected {N} values, got {len(rec['values'])}"
            )
        idxs, vals, refs = per_level.setdefault(int(rec["level"]), ([], [], []))
        idxs.append(rec["index"])
        vals.append(rec["values"])
        refs.append(refined)

    visits = []
    for level in sorted(per_level):
        idxs, vals, refs = per_level[level]
        visits.append(LevelVisit(
            level=level,
            indices=np.asarray(idxs, dtype=np.int64),
            values=np.asarray(vals, dtype=np.float64),
            refined=np.asarray(refs, dtype=bool),
        ))
    ledger = WorkLedger.from_dict(data["ledger"])
    return RunResult(config=cfg, visits=visits, ledger=ledger,
                     uniform=bool(data.get("uniform", False)),
                     resumable=bool(data.get("resumable", True)))


def write_ledger(ledger: WorkLedger, path, metadata: dict | None = None) -> None:
    payload = {"format": "levelmesh-ledger", "version": 1, "meta": metadata or {}}
    payload.update(ledger.to_dict())
    payload["schedule"]["beta"] = _encode_value(payload["schedule"]["beta"])
    _dump_json(payload, path)


def write_sweep_csv(sweep, path, metadata: dict | None = None) -> None:
    """Sweep rows as CSV: L, h_L, mean_error, std_error, total_work, n_cells."""
    with open(path, "w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for r in sweep.rows:
            writer.writerow([
                str(r.L), repr(r.h_L), repr(r.error_mean), repr(r.error_std_error),
                repr(r.work_total), repr(r.leaf_cells),
            ])


def write_sweep_summary(sweep, path, metadata: dict | None = None) -> None:
    _dump_json({
        "format": "levelmesh-sweep",
        "version": 1,
        "meta": metadata or {},
        "fitted_slope": sweep.fitted_slope,
        "target_slope": sweep.target_slope,
        "point_family": sweep.point_family,
        "rows": [
            {"L": r.L, "ell0": r.ell0, "h_L": r.h_L, "error_mean": r.error_mean,
             "error_std_error": r.error_std_error, "work_total": r.work_total,
             "leaf_cells": r.leaf_cells}
            for r in sweep.rows
        ],
    }, path)
