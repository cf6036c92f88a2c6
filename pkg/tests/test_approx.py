import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelmesh.approx import (abs_min_batch, cell_abs_min, decision_variable,
                              eval_batch, eval_local, fit_local,
                              multilinear_weights)
from levelmesh.grid import Domain, corner_offsets, uniform_tessellation


def unit_cell(d=2):
    domain = Domain(lower=(0.0,) * d, upper=(1.0,) * d)
    return next(uniform_tessellation(domain, 0, 1.0).cells)


def brute_force_multilinear(values, x):
    """Independent direct tensor-product formula, written long-hand."""
    d = len(x)
    total = 0.0
    for j, off in enumerate(corner_offsets(d)):
        w = 1.0
        for i in range(d):
            w *= x[i] if off[i] else (1.0 - x[i])
        total += w * values[j]
    return total


def test_zero_samples_give_zero_function():
    approx = fit_local(unit_cell(), [0.0, 0.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    pts = rng.random((50, 2))
    assert np.all(eval_local(approx, pts) == 0.0)


def test_bilinear_exactness_hand_case():
    f = lambda x, y: 3 + 2 * x - y + 5 * x * y
    cell = unit_cell()
    samples = [f(0, 0), f(1, 0), f(0, 1), f(1, 1)]
    approx = fit_local(cell, samples)
    assert eval_local(approx, [0.5, 0.5]) == pytest.approx(4.75, abs=1e-14)
    assert eval_local(approx, [0.5, 0.5]) == pytest.approx(f(0.5, 0.5), abs=1e-14)


def test_linear_interpolation_1d():
    approx = fit_local(unit_cell(d=1), [1.0, 3.0])
    assert eval_local(approx, [0.25]) == pytest.approx(1.5, abs=1e-15)


def test_constant_samples():
    approx = fit_local(unit_cell(), [2.5] * 4)
    rng = np.random.default_rng(1)
    assert np.allclose(eval_local(approx, rng.random((20, 2))), 2.5, rtol=1e-15)


def test_center_is_vertex_mean():
    vals = [1.0, 2.0, -3.0, 7.0]
    approx = fit_local(unit_cell(), vals)
    assert eval_local(approx, [0.5, 0.5]) == pytest.approx(np.mean(vals), abs=1e-15)


def test_agreement_with_brute_force_formula():
    rng = np.random.default_rng(2)
    for d in (1, 2, 3):
        cell = unit_cell(d)
        vals = rng.normal(size=1 << d)
        approx = fit_local(cell, vals)
        pts = rng.random((100, d))
        ours = eval_local(approx, pts)
        ref = np.array([brute_force_multilinear(vals, p) for p in pts])
        assert np.allclose(ours, ref, rtol=1e-14, atol=1e-14)


def test_wrong_sample_count():
    with pytest.raises(ValueError, match="expected 4 samples"):
        fit_local(unit_cell(), [1.0, 2.0, 3.0])


def test_eval_outside_cell():
    approx = fit_local(unit_cell(), [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ValueError, match="outside cell"):
        eval_local(approx, [1.5, 0.5])


def test_multilinear_exactness_random_multilinear():
    # a multilinear function is determined by arbitrary corner coefficients
    rng = np.random.default_rng(3)
    for d in (2, 3):
        cell = unit_cell(d)
        coef = rng.normal(size=1 << d)

        def f(x):
            return brute_force_multilinear(coef, x)

        offs = corner_offsets(d).astype(float)
        approx = fit_local(cell, [f(v) for v in offs])
        pts = rng.random((200, d))
        vals = eval_local(approx, pts)
        ref = np.array([f(p) for p in pts])
        scale = np.abs(ref).max()
        assert np.abs(vals - ref).max() <= 1e-13 * max(scale, 1.0)


def test_fit_is_linear_in_samples():
    rng = np.random.default_rng(4)
    cell = unit_cell()
    s, t = rng.normal(size=4), rng.normal(size=4)
    a, b = 1.7, -0.3
    combo = fit_local(cell, a * s + b * t)
    fs, ft = fit_local(cell, s), fit_local(cell, t)
    pts = rng.random((50, 2))
    lhs = eval_local(combo, pts)
    rhs = a * eval_local(fs, pts) + b * eval_local(ft, pts)
    assert np.abs(lhs - rhs).max() <= 1e-13 * max(np.abs(rhs).max(), 1.0)


def dense_grid_abs_min(values, d, n=200):
    axes = [np.linspace(0.0, 1.0, n)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = eval_batch(np.asarray(values, float)[None, :], pts[None, :, :])[0]
    return np.abs(vals).min()


def test_cell_abs_min_examples_against_dense_grid():
    cell = unit_cell()
    for values, expected in [((1.0, 2.0, 3.0, 4.0), 1.0),
                             ((-1.0, 2.0, 3.0, 4.0), 0.0),
                             ((-2.0, -5.0, -3.0, -9.0), 2.0)]:
        approx = fit_local(cell, values)
        got = cell_abs_min(approx)
        assert got == expected
        dense = dense_grid_abs_min(values, 2)
        assert got <= dense + 1e-12
        assert dense - got <= 0.05 * max(1.0, abs(got))  # grid resolution slack


def test_vertex_extremum_property_bulk():
    # 10^4 random approximants, 10^3 random interior points each (batched)
    rng = np.random.default_rng(5)
    values = rng.normal(size=(10_000, 4))
    pts = rng.random((1, 1000, 2))
    evals = eval_batch(values, np.broadcast_to(pts, (values.shape[0], 1000, 2)))
    cams = abs_min_batch(values.copy())
    assert np.all(cams <= np.abs(evals).min(axis=1) + 1e-12)
    # the dense minimum approaches cell_abs_min within grid resolution
    sub = values[:100]
    dense = np.array([dense_grid_abs_min(v, 2, n=101) for v in sub])
    gap = dense - abs_min_batch(sub.copy())
    assert np.all(gap >= -1e-12)
    assert np.all(gap <= 0.08 * np.maximum(1.0, np.abs(sub).max(axis=1)))


def test_decision_variable_examples():
    domain = Domain(lower=(0.0, 0.0), upper=(1.0, 1.0))
    cell = next(c for c in uniform_tessellation(domain, 2, 1.0).cells)
    assert cell.size == 0.25
    dv = decision_variable(fit_local(cell, [1.0, 2.0, 3.0, 4.0]), alpha=2.0)
    assert dv.value == pytest.approx(16.0, rel=1e-14)
    assert dv.cell_min_abs == 1.0 and dv.h_pow_alpha == pytest.approx(0.0625)

    dv0 = decision_variable(fit_local(cell, [-1.0, 2.0, 3.0, 4.0]), alpha=2.0)
    assert dv0.value == 0.0


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4),
       st.floats(0.01, 100.0))
@settings(max_examples=200, deadline=None)
def test_decision_variable_homogeneity(values, t):
    cell = unit_cell()
    base = decision_variable(fit_local(cell, values), alpha=2.0).value
    scaled = decision_variable(fit_local(cell, [t * v for v in values]), alpha=2.0).value
    assert scaled == pytest.approx(t * base, rel=1e-12, abs=1e-300)
    flipped = decision_variable(fit_local(cell, [-v for v in values]), alpha=2.0).value
    assert flipped == base


@given(st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=4, max_size=4))
@settings(max_examples=200, deadline=None)
def test_interpolation_property_at_vertices(values):
    cell = unit_cell()
    approx = fit_local(cell, values)
    offs = corner_offsets(2).astype(float)
    for j, v in enumerate(values):
        assert eval_local(approx, offs[j]) == v


def test_weights_partition_of_unity():
    rng = np.random.default_rng(6)
    for d in (1, 2, 3, 4):
        u = rng.random((30, d))
        w = multilinear_weights(u, d)
        assert np.allclose(w.sum(axis=-1), 1.0, rtol=1e-14)
        assert np.all(w >= 0)
