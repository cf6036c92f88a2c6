"""The adaptive refinement driver: thresholds, level sweep, ledger, resume.

The sweep refines a uniform base mesh level by level.  Each visited cell is
sampled at its own level through the oracle, fitted with a multilinear
interpolant, scored with the decision variable, and refined when the score
falls at or below the level threshold.  Survivors keep the approximant from
the level where they were visited; cells reaching the final level are sampled
and fitted there.

Because oracle samples are keyed by (cell, vertex, level), a run is a pure
function of (config, oracle): worker count, chunking and resume order cannot
change any bit of the result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_int, check_scalar
from .approx import abs_min_batch
from .grid import AdaptiveMesh, Domain, refine_indices, vertex_coords
from .oracles import CostSchedule, EvaluationOracle
from .streams import Tag, chain, derive_key

__all__ = [
    "RunConfig",
    "WorkLedger",
    "LevelTally",
    "LevelVisit",
    "RunResult",
    "base_level",
    "refinement_threshold",
    "run_adaptive",
    "resume",
]

_CHUNK_CELLS = 262_144  # per-chunk cap on visited cells, keeps peak memory modest


def base_level(L: int, p: float, R: float, alpha: float | None = None) -> int:
    """First adaptive level: ceil(L * (1 - p / (R (p + 1)))), with p -> inf -> 1.

    R must lie in (1, alpha_p); the upper bound is checked when alpha is given.
    """
    L = check_int(L, "L", minimum=1)
    R = check_scalar(R, "R")
    p = check_scalar(p, "p", minimum=1.0, allow_inf=True)
    if not R > 1.0:
        raise ValueError(f"R must satisfy 1 < R < alpha_p, got R={R}")
    if alpha is not None:
        ap = alpha if math.isinf(p) else alpha * p / (p + 1.0)
        if not R < ap:
            raise ValueError(f"R must satisfy 1 < R < alpha_p={ap}, got R={R}")
    frac = 1.0 if math.isinf(p) else p / (p + 1.0)
    # nudge guards float error from pushing an exactly-integer product upward
    return max(0, math.ceil(L * (1.0 - frac / R) - 1e-9))


@dataclass(frozen=True)
class RunConfig:
    """All parameters of one adaptive run.

    beta and p may be math.inf (deterministic oracle / max-norm noise
    control).  R defaults to (1 + alpha_p) / 2, a choice that works well in
    practice; c scales every refinement threshold linearly.
    """

    domain: Domain
    h0: float
    max_level: int
    alpha: float = 2.0
    beta: float = 0.5
    p: float = math.inf
    R: float | None = None
    c: float = 1.0
    M0: float = 1.0
    seed: int = 0
    base_level_override: int | None = None

    def __post_init__(self):
        check_scalar(self.h0, "h0", exclusive_minimum=0.0)
        check_int(self.max_level, "max_level", minimum=1)
        check_scalar(self.alpha, "alpha", exclusive_minimum=0.0)
        check_scalar(self.beta, "beta", exclusive_minimum=0.0, allow_inf=True)
        check_scalar(self.p, "p", minimum=1.0, allow_inf=True)
        check_scalar(self.c, "c", exclusive_minimum=0.0)
        check_scalar(self.M0, "M0", exclusive_minimum=0.0)
        check_int(self.seed, "seed", minimum=0)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def alpha_p(self) -> float:
        if math.isinf(self.p):
            return self.alpha
        return self.alpha * self.p / (self.p + 1.0)

    @property
    def r_value(self) -> float:
        return (1.0 + self.alpha_p) / 2.0 if self.R is None else float(self.R)

    @property
    def ell0(self) -> int:
        """First adaptive level: the general formula, or the user override
        (for when the error constants are known and a sharper uniform depth
        can be computed externally)."""
        if self.base_level_override is not None:
            return int(self.base_level_override)
        return base_level(self.max_level, self.p, self.r_value, alpha=self.alpha)

    def validate(self) -> None:
        """Check the coupled invariants; raises ValueError naming the offender."""
        p_ratio = 1.0 if math.isinf(self.p) else (self.p + 1.0) / self.p
        if not self.alpha > p_ratio:
            raise ValueError(
                f"alpha must exceed (p+1)/p = {p_ratio} (got alpha={self.alpha}, p={self.p})"
            )
        R = self.r_value
        if not 1.0 < R < self.alpha_p:
            raise ValueError(
                f"R must lie in (1, alpha_p) = (1, {self.alpha_p}), got R={R}"
            )
        if self.base_level_override is not None and not (
                0 <= self.base_level_override <= self.max_level):
            raise ValueError(
                f"base_level_override must lie in [0, max_level], "
                f"got {self.base_level_override}"
            )
        self.domain.base_counts(self.h0)  # raises naming the axis on mismatch

    def cell_size(self, level: int) -> float:
        return self.h0 * 2.0 ** (-int(level))

    def schedule(self) -> CostSchedule:
        return CostSchedule(M0=self.M0, alpha=self.alpha, beta=self.beta, h0=self.h0)

    def config_fields(self) -> dict:
        return {
            "domain_lower": list(self.domain.lower),
            "domain_upper": list(self.domain.upper),
            "h0": self.h0,
            "max_level": self.max_level,
            "alpha": self.alpha,
            "beta": self.beta,
            "p": self.p,
            "R": self.R,
            "c": self.c,
            "M0": self.M0,
            "seed": self.seed,
            "base_level_override": self.base_level_override,
        }


def refinement_threshold(level: int, cfg: RunConfig, ell0: int) -> float:
    """The level threshold compared against the decision variable.

    c * h_l**(ap/R) * h_L**(ap (R-1)/R) * h_l0**(-ap/R) * h_l**(-alpha),
    with all sizes taken from the dyadic schedule h_l = h0 * 2**-l.
    """
    level = check_int(level, "level")
    if not ell0 <= level < cfg.max_level:
        raise ValueError(
            f"level must lie in [{ell0}, {cfg.max_level}) for thresholds, got {level}"
        )
    ap = cfg.alpha_p
    R = cfg.r_value
    h_l = cfg.cell_size(level)
    h_L = cfg.cell_size(cfg.max_level)
    h_l0 = cfg.cell_size(ell0)
    return cfg.c * h_l ** (ap / R) * h_L ** (ap * (R - 1.0) / R) \
        * h_l0 ** (-ap / R) * h_l ** (-cfg.alpha)


@dataclass(frozen=True)
class LevelTally:
    level: int
    cells_visited: int
    cells_refined: int
    evaluations: int
    cost: float


class WorkLedger:
    """Exact tally of evaluation cost and refinement events per level.

    Counts are integers; costs are always recomputed as
    evaluations * M_level, and the total sums per-level costs in ascending
    level order, so merged or deserialized ledgers reproduce the same floats
    bit for bit.
    """

    def __init__(self, schedule: CostSchedule):
        self.schedule = schedule
        self._rows: dict[int, list[int]] = {}  # level -> [visited, refined, evaluations]

    def record(self, level: int, visited: int, refined: int, evaluations: int) -> None:
        row = self._rows.setdefault(int(level), [0, 0, 0])
        row[0] += int(visited)
        row[1] += int(refined)
        row[2] += int(evaluations)

    def row_cost(self, level: int) -> float:
        return self._rows[level][2] * self.schedule.at_level(level)

    @property
    def per_level(self) -> list[LevelTally]:
        return [
            LevelTally(lvl, *self._rows[lvl], cost=self.row_cost(lvl))
            for lvl in sorted(self._rows)
        ]

    @property
    def total_cost(self) -> float:
        return sum(self.row_cost(lvl) for lvl in sorted(self._rows))

    @property
    def total_evaluations(self) -> int:
        return sum(r[2] for r in self._rows.values())

    def merge(self, other: "WorkLedger") -> "WorkLedger":
        """Combine per-worker partial tallies; result is schedule-independent."""
        if other.schedule != self.schedule:
            raise ValueError("cannot merge ledgers with different cost schedules")
        out = WorkLedger(self.schedule)
        for src in (self, other):
            for lvl, (v, r, e) in src._rows.items():
                out.record(lvl, v, r, e)
        return out

    def equals(self, other: "WorkLedger") -> bool:
        return self.schedule == other.schedule and self._rows == other._rows

    def to_dict(self) -> dict:
        return {
            "schedule": {"M0": self.schedule.M0, "alpha": self.schedule.alpha,
                         "beta": self.schedule.beta, "h0": self.schedule.h0},
            "per_level": [
                {"level": t.level, "cells_visited": t.cells_visited,
                 "cells_refined": t.cells_refined, "evaluations": t.evaluations,
                 "cost": t.cost}
                for t in self.per_level
            ],
            "total_cost": self.total_cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorkLedger":
        sched = data["schedule"]
        beta = sched["beta"] if not isinstance(sched["beta"], str) else math.inf
        ledger = cls(CostSchedule(M0=sched["M0"], alpha=sched["alpha"],
                                  beta=beta, h0=sched["h0"]))
        for row in data["per_level"]:
            ledger.record(row["level"], row["cells_visited"],
                          row["cells_refined"], row["evaluations"])
        return ledger


@dataclass
class LevelVisit:
    """All cells visited (sampled and fitted) at one level of the sweep."""

    level: int
    indices: np.ndarray   # (n, d) int64
    values: np.ndarray    # (n, 2**d) float64 vertex samples
    refined: np.ndarray   # (n,) bool


@dataclass
class RunResult:
    """Outcome of a run: the decision trace, the ledger, and the leaf mesh."""

    config: RunConfig
    visits: list[LevelVisit]
    ledger: WorkLedger
    uniform: bool = False
    resumable: bool = True
    _mesh: AdaptiveMesh | None = field(default=None, repr=False, compare=False)

    def mesh(self) -> AdaptiveMesh:
        """Leaf-only mesh with per-cell vertex values, canonically ordered."""
        if self._mesh is None:
            mesh = AdaptiveMesh(self.config.domain, self.config.h0)
            for visit in self.visits:
                keep = ~visit.refined
                if keep.any():
                    mesh.add_level(visit.level, visit.indices[keep], visit.values[keep])
            mesh.sort_canonical()
            self._mesh = mesh
        return self._mesh

    def leaf_level_counts(self) -> dict[int, int]:
        return self.mesh().level_counts()


def _sample_level(oracle: EvaluationOracle, cfg: RunConfig, level: int,
                  indices: np.ndarray, stored: tuple[np.ndarray, np.ndarray] | None,
                  workers: int) -> np.ndarray:
    """Sample N vertices of every cell in `indices` at `level`.

    Rows found in `stored` (sorted linear ids -> value rows) are reused instead
    of re-querying the oracle; stored rows are bitwise identical to fresh ones
    because samples are keyed by (cell, vertex, level).
    """
    n = indices.shape[0]
    d = cfg.d
    N = 1 << d
    values = np.empty((n, N), dtype=np.float64)
    lower = cfg.domain.lower_array()

    todo = np.ones(n, dtype=bool)
    if stored is not None:
        stored_lin, stored_vals = stored
        lin = _linear_ids(indices, cfg, level)
        pos = np.searchsorted(stored_lin, lin)
        pos_ok = pos < stored_lin.shape[0]
        hit = np.zeros(n, dtype=bool)
        hit[pos_ok] = stored_lin[pos[pos_ok]] == lin[pos_ok]
        if hit.any():
            values[hit] = stored_vals[pos[hit]]
            todo &= ~hit

    idx_todo = np.nonzero(todo)[0]
    if idx_todo.size == 0:
        return values

    def work(sl: slice) -> None:
        rows = idx_todo[sl]
        sub = indices[rows]
        coords = vertex_coords(sub, level, cfg.h0, lower)      # (m, N, d)
        keys = _vertex_keys(cfg.seed, level, sub, N)           # (m, N)
        vals, _ = oracle.evaluate_batch(coords.reshape(-1, d), level, keys.reshape(-1))
        values[rows] = np.asarray(vals, dtype=np.float64).reshape(-1, N)

    chunk = min(_CHUNK_CELLS, max(1, math.ceil(idx_todo.size / max(1, workers))))
    slices = [slice(s, min(s + chunk, idx_todo.size)) for s in range(0, idx_todo.size, chunk)]
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, slices))
    else:
        for sl in slices:
            work(sl)
    return values


def _vertex_keys(seed: int, level: int, indices: np.ndarray, N: int,
                 replicate: int = 0) -> np.ndarray:
    key = derive_key(seed, Tag.VERTEX_SAMPLE, level)
    for ax in range(indices.shape[1]):
        key = chain(key, indices[:, ax])
    key = chain(key[:, None], np.arange(N, dtype=np.int64))
    return chain(key, replicate)


def _linear_ids(indices: np.ndarray, cfg: RunConfig, level: int) -> np.ndarray:
    counts = cfg.domain.base_counts(cfg.h0) * (1 << level)
    lin = indices[:, 0].astype(np.int64).copy()
    for ax in range(1, indices.shape[1]):
        lin = lin * int(counts[ax]) + indices[:, ax]
    return lin


def _full_cohort(cfg: RunConfig, level: int) -> np.ndarray:
    counts = cfg.domain.base_counts(cfg.h0) * (1 << level)
    grids = np.meshgrid(*[np.arange(c, dtype=np.int64) for c in counts], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def run_adaptive(cfg: RunConfig, oracle: EvaluationOracle, *, uniform: bool = False,
                 workers: int = 1, keep_tree: bool = True) -> RunResult:
    """Run the full adaptive sweep (or the always-refine uniform baseline).

    Work accounting: the uniform phase below the first adaptive level charges
    N * M_l per cell without querying the oracle (values there are never
    used); every visited cell from the first adaptive level on is charged its
    N vertex evaluations.  With keep_tree=False only leaf records are kept,
    which saves memory but makes the result non-resumable.
    """
    cfg.validate()
    return _sweep(cfg, oracle, stored_by_level=None, uniform=uniform,
                  workers=workers, keep_tree=keep_tree)


def _sweep(cfg: RunConfig, oracle: EvaluationOracle,
           stored_by_level: dict[int, tuple[np.ndarray, np.ndarray]] | None,
           uniform: bool, workers: int, keep_tree: bool) -> RunResult:
    d = cfg.d
    N = 1 << d
    L = cfg.max_level
    ell0 = cfg.ell0
    ledger = WorkLedger(cfg.schedule())
    base = int(np.prod(cfg.domain.base_counts(cfg.h0).astype(object)))

    for lvl in range(0, ell0):
        count = base * (1 << (d * lvl))
        ledger.record(lvl, visited=count, refined=count, evaluations=N * count)

    visits: list[LevelVisit] = []
    cohort = _full_cohort(cfg, ell0)
    for lvl in range(ell0, L + 1):
        stored = stored_by_level.get(lvl) if stored_by_level else None
        values = _sample_level(oracle, cfg, lvl, cohort, stored, workers)
        n = cohort.shape[0]
        if lvl == L:
            refined = np.zeros(n, dtype=bool)
        elif uniform:
            refined = np.ones(n, dtype=bool)
        else:
            a_l = refinement_threshold(lvl, cfg, ell0)
            h_pow = cfg.cell_size(lvl) ** cfg.alpha
            delta = abs_min_batch(values) / h_pow
            refined = delta <= a_l
        ledger.record(lvl, visited=n, refined=int(refined.sum()), evaluations=N * n)

        if keep_tree:
            visits.append(LevelVisit(lvl, cohort, values, refined))
        else:
            keep = ~refined
            visits.append(LevelVisit(lvl, cohort[keep], values[keep],
                                     np.zeros(int(keep.sum()), dtype=bool)))
        if lvl == L or not refined.any():
            break
        cohort = refine_indices(cohort[refined], d)

    return RunResult(config=cfg, visits=visits, ledger=ledger,
                     uniform=uniform, resumable=keep_tree)


def resume(result: RunResult, new_max_level: int, oracle: EvaluationOracle, *,
           config: RunConfig | None = None, workers: int = 1) -> RunResult:
    """Extend a finished run to a deeper final level.

    The decision trace is replayed against the thresholds of the deeper
    target using the stored keyed samples (no oracle work is repeated), and
    the sweep continues with fresh samples beyond the old frontier.  The
    outcome, including its ledger, is bitwise identical to a fresh run at the
    new level with the same seed.  Levels whose decisions flip under the new
    thresholds are re-decided, so the returned ledger reflects the work of
    the equivalent fresh run.
    """
    new_max_level = check_int(new_max_level, "new_max_level", minimum=1)
    old = result.config
    if new_max_level < old.max_level:
        raise ValueError(
            f"new_max_level must be >= the previous max_level "
            f"({old.max_level}), got {new_max_level}"
        )
    if config is not None:
        want = replace(old, max_level=config.max_level)
        if config != want:
            for name, a, b in (
                (f.name, getattr(config, f.name), getattr(want, f.name))
                for f in want.__dataclass_fields__.values()
            ):
                if a != b:
                    raise ValueError(
                        f"resume config mismatch on field {name!r}: {a!r} != {b!r}"
                    )
    if new_max_level == old.max_level:
        return result
    if not result.resumable:
        raise ValueError("result was built with keep_tree=False and cannot be resumed")

    cfg2 = replace(old, max_level=new_max_level)
    cfg2.validate()
    stored: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for visit in result.visits:
        lin = _linear_ids(visit.indices, cfg2, visit.level)
        order = np.argsort(lin)
        stored[visit.level] = (lin[order], visit.values[order])
    return _sweep(cfg2, oracle, stored_by_level=stored, uniform=result.uniform,
                  workers=workers, keep_tree=True)
