"""Acceptance suite: convergence rates, exactness contracts, determinism.

Each test prints one PASS/FAIL line (run with -s to see them live).  The
rate tests run the full desk-scale benchmarks and take several minutes each;
the whole module is a complete verification pass of the engine.
"""

import math

import numpy as np
import pytest

from levelmesh.approx import abs_min_batch, eval_batch
from levelmesh.bench import DROP_WAVE, STYBLINSKI_TANG, convergence_sweep
from levelmesh.extract import endpoint_residuals, extract_levelset
from levelmesh.grid import AdaptiveMesh, Domain, corner_offsets
from levelmesh.metrics import fit_loglog_slope, sign_mismatch_error
from levelmesh.oracles import DeterministicOracle
from levelmesh.refine import RunConfig, resume, run_adaptive
from levelmesh.streams import derive_key

WORKERS = 2


def report(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def dropwave_deterministic_L6():
    cfg = DROP_WAVE.config(6, seed=0)
    return run_adaptive(cfg, DROP_WAVE.oracle(cfg, noisy=False), workers=WORKERS)


def test_criterion_1_dropwave_complexity_slope():
    """Noisy 2D drop-wave, L = 1..6, 10 runs each: work-vs-error slope
    in [-2.9, -2.1] (theory: -(1/beta + (d-1)/alpha) = -2.5)."""
    sweep = convergence_sweep(DROP_WAVE, [1, 2, 3, 4, 5, 6], n_runs=10,
                              n_points=512, seed=0, workers=WORKERS)
    slope = sweep.fitted_slope
    errors = [r.error_mean for r in sweep.rows]
    works = [r.work_total for r in sweep.rows]
    assert all(b > a for a, b in zip(works, works[1:])), "work must increase with L"
    combined_se = [3 * r.error_std_error for r in sweep.rows]
    for i in range(1, len(errors)):
        assert errors[i] <= errors[i - 1] + combined_se[i] + combined_se[i - 1], \
            "error mean must be nonincreasing up to 3 combined standard errors"
    report(1, "drop-wave complexity slope", -2.9 <= slope <= -2.1,
           f"slope={slope:.3f}, band [-2.9, -2.1], target -2.5")


def test_criterion_2_styblinski_tang_complexity_slope():
    """Noisy 3D Styblinski-Tang, L = 1..5, 32 runs each: slope in
    [-3.5, -2.5] (theory: -3)."""
    sweep = convergence_sweep(STYBLINSKI_TANG, [1, 2, 3, 4, 5], n_runs=32,
                              n_points=128, seed=0, workers=WORKERS)
    slope = sweep.fitted_slope
    report(2, "Styblinski-Tang complexity slope", -3.5 <= slope <= -2.5,
           f"slope={slope:.3f}, band [-3.5, -2.5], target -3")


def test_criterion_3_uniform_error_rate():
    """Deterministic drop-wave on uniform meshes at levels 2..6: error-vs-h
    slope in [1.7, 2.3] (theory: alpha_p = 2)."""
    pairs = []
    for L in range(2, 7):
        cfg = DROP_WAVE.config(L, seed=0)
        res = run_adaptive(cfg, DROP_WAVE.oracle(cfg, noisy=False), uniform=True,
                           workers=WORKERS, keep_tree=False)
        err = sign_mismatch_error(res.mesh(), DROP_WAVE.f, 64,
                                  derive_key(0, 99, L), workers=WORKERS)
        pairs.append((cfg.cell_size(L), err))
    slope, _ = fit_loglog_slope(pairs)
    report(3, "uniform-refinement error rate", 1.7 <= slope <= 2.3,
           f"slope={slope:.3f}, band [1.7, 2.3], target 2")


def test_criterion_4_adaptive_cell_count_rate(dropwave_deterministic_L6):
    """Deterministic drop-wave adaptive run: leaf counts grow like 2**level
    (log2 growth in [0.6, 1.4]); the uniform baseline grows like 4**level.

    The fit starts one level above the first adaptive level: the first
    adaptive level's leaf count is dominated by the uniform-phase background
    (every cell the first threshold test rejects), not by the level-set
    neighborhood whose growth is being measured.
    """
    res = dropwave_deterministic_L6
    counts = res.mesh().level_counts()
    ell0 = res.config.ell0
    tail = [(2.0**lvl, counts[lvl]) for lvl in sorted(counts) if lvl > ell0]
    slope, _ = fit_loglog_slope(tail)
    slope_log2 = slope  # log2 count vs level equals log count vs log 2**level

    uniform_counts = {}
    for L in (2, 3):
        cfg = DROP_WAVE.config(L, seed=0)
        r = run_adaptive(cfg, DROP_WAVE.oracle(cfg, noisy=False), uniform=True,
                         keep_tree=False)
        uniform_counts[L] = r.mesh().n_cells
    uniform_growth = math.log2(uniform_counts[3] / uniform_counts[2])

    ok = 0.6 <= slope_log2 <= 1.4 and uniform_growth == pytest.approx(2.0, abs=1e-12)
    report(4, "adaptive cell-count rate", ok,
           f"adaptive log2 growth={slope_log2:.3f} in [0.6, 1.4]; "
           f"uniform growth={uniform_growth:.3f} (= 2)")


def test_criterion_5_work_ledger_exactness(dropwave_deterministic_L6):
    """total_cost equals an independently recomputed sum of N * M_l over the
    recorded per-level evaluation tallies, exactly (noisy and deterministic)."""
    cfg_noisy = DROP_WAVE.config(4, seed=77)
    noisy = run_adaptive(cfg_noisy, DROP_WAVE.oracle(cfg_noisy))
    oks = []
    for result in (dropwave_deterministic_L6, noisy):
        cfg = result.config
        recomputed = sum(
            t.evaluations * (cfg.M0 * cfg.cell_size(t.level) ** -(cfg.alpha / cfg.beta))
            for t in result.ledger.per_level
        )
        oks.append(recomputed == result.ledger.total_cost)
        # tallies are self-consistent: evaluations = N * cells_visited
        N = 1 << cfg.d
        assert all(t.evaluations == N * t.cells_visited
                   for t in result.ledger.per_level)
    report(5, "work-ledger exactness", all(oks),
           f"exact equality on {len(oks)}/2 runs (deterministic + noisy)")


def test_criterion_6_error_metric_oracle_equivalence():
    """Single-cell analytic case (truth x0, approximant x0 - 0.1, mismatch
    volume 0.1): 512-point estimate within 3 standard errors for >= 18 of 20
    independent keys."""
    mesh = AdaptiveMesh(Domain(lower=(0.0, 0.0), upper=(1.0, 1.0)), 1.0)
    mesh.add_level(0, np.array([[0, 0]]),
                   np.array([[-0.1, 0.9, -0.1, 0.9]]))
    truth = lambda X: np.atleast_2d(X)[:, 0]
    inside = 0
    se = math.sqrt(0.1 * 0.9 / 512)
    for k in range(20):
        est = sign_mismatch_error(mesh, truth, 512, derive_key(1000 + k, 6))
        inside += abs(est - 0.1) <= 3 * se
    report(6, "error-metric oracle equivalence", inside >= 18,
           f"{inside}/20 keys within 3 standard errors of 0.1")


def test_criterion_7_multilinear_property_suite():
    """10**4 randomized approximants: multilinear exactness (1e-13), the
    vertex-extremum property, linearity of the fit, and decision-variable
    homogeneity."""
    rng = np.random.default_rng(7)
    n = 10_000
    failures = []

    for d in (2, 3):
        N = 1 << d
        coef = rng.normal(size=(n, N))
        pts = rng.random((n, 50, d))
        offs = corner_offsets(d).astype(np.float64)
        # multilinear exactness: fitting corner values of a multilinear
        # function reproduces it everywhere
        corner_vals = eval_batch(coef, np.broadcast_to(offs[None], (n, N, d)))
        direct = eval_batch(coef, pts)
        refit = eval_batch(corner_vals, pts)
        scale = np.maximum(np.abs(direct).max(axis=1), 1e-30)
        err = np.abs(refit - direct).max(axis=1) / scale
        if err.max() > 1e-13:
            failures.append(f"d={d} exactness {err.max():.2e}")

        # vertex extremum: min |values| at corners bounds |interpolant|
        cams = abs_min_batch(corner_vals.copy())
        if not np.all(cams <= np.abs(direct).min(axis=1) + 1e-12):
            failures.append(f"d={d} vertex extremum")

        # linearity of the fit in the samples
        a, b = 1.3, -2.1
        lin_lhs = eval_batch(a * coef + b * coef[::-1], pts)
        lin_rhs = a * eval_batch(coef, pts) + b * eval_batch(coef[::-1], pts)
        lin_scale = np.maximum(np.abs(lin_rhs).max(axis=1), 1e-30)
        if (np.abs(lin_lhs - lin_rhs).max(axis=1) / lin_scale).max() > 1e-13:
            failures.append(f"d={d} linearity")

    # decision-variable homogeneity and sign invariance on the 2D batch
    vals2 = rng.normal(size=(n, 4))
    h_pow = 0.25**2
    delta = abs_min_batch(vals2.copy()) / h_pow
    t = 3.7
    if not np.allclose(abs_min_batch(t * vals2) / h_pow, t * delta, rtol=1e-12):
        failures.append("homogeneity")
    if not np.array_equal(abs_min_batch(-vals2), abs_min_batch(vals2.copy())):
        failures.append("sign flip")

    report(7, "multilinear exactness and vertex-extremum", not failures,
           "all property checks over 10^4 approximants" if not failures
           else "; ".join(failures))


def test_criterion_8_extraction_fidelity(dropwave_deterministic_L6):
    """Globally linear truth: all geometry on the true hyperplane within
    1e-12; endpoint residual <= 1e-9 on every piece of the drop-wave run."""
    worst_plane = 0.0
    for d in (2, 3):
        domain = Domain(lower=(0.0,) * d, upper=(1.0,) * d)
        normal = np.array([1.0, -0.5, 0.25][:d])
        f = lambda X: np.atleast_2d(X) @ normal - 0.37
        cfg = RunConfig(domain=domain, h0=1.0, max_level=4, alpha=2.0,
                        beta=math.inf, p=math.inf, R=1.5)
        result = run_adaptive(cfg, DeterministicOracle(f))
        geom = extract_levelset(result.mesh())
        assert geom.n_pieces > 0
        residual = np.abs(geom.pieces.reshape(-1, d) @ normal - 0.37)
        worst_plane = max(worst_plane, float(residual.max()))

    mesh = dropwave_deterministic_L6.mesh()
    geom = extract_levelset(mesh)
    worst_endpoint = float(endpoint_residuals(geom, mesh).max())
    ok = worst_plane <= 1e-12 and worst_endpoint <= 1e-9
    report(8, "extraction fidelity", ok,
           f"hyperplane residual {worst_plane:.2e} <= 1e-12; "
           f"endpoint residual {worst_endpoint:.2e} <= 1e-9 "
           f"over {geom.n_pieces} drop-wave pieces")


def test_criterion_9_determinism_and_resume():
    """run(L=4) + resume(6) is bitwise identical to run(L=6) - mesh, ledger,
    and geometry - including under different worker counts."""
    cfg4 = DROP_WAVE.config(4, seed=123)
    cfg6 = DROP_WAVE.config(6, seed=123)
    oracle6 = DROP_WAVE.oracle(cfg6)

    fresh = run_adaptive(cfg6, oracle6, workers=1)
    fresh_w3 = run_adaptive(cfg6, oracle6, workers=3)
    stepped = resume(run_adaptive(cfg4, DROP_WAVE.oracle(cfg4), workers=3),
                     6, oracle6, workers=2)

    mesh_ok = fresh.mesh().equals(stepped.mesh()) and fresh.mesh().equals(fresh_w3.mesh())
    ledger_ok = fresh.ledger.equals(stepped.ledger) and fresh.ledger.equals(fresh_w3.ledger)
    g_fresh = extract_levelset(fresh.mesh())
    g_stepped = extract_levelset(stepped.mesh())
    geom_ok = g_fresh.equals(g_stepped)
    report(9, "determinism and resume",
           mesh_ok and ledger_ok and geom_ok,
           f"mesh={mesh_ok}, ledger={ledger_ok}, geometry={geom_ok} "
           f"(workers 1/2/3, {g_fresh.n_pieces} pieces)")
