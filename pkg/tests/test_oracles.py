import math

import numpy as np
import pytest

from levelmesh.grid import Domain
from levelmesh.oracles import (CostSchedule, DeterministicOracle,
                               GaussianNoiseOracle, MonteCarloOracle,
                               averaged_mc_variance, cost_per_eval)
from levelmesh.streams import Tag, chain, derive_key


def f2(points):
    X = np.atleast_2d(points)
    return X[:, 0] + 2.0 * X[:, 1]


def test_cost_schedule_matches_power_of_two_ladder():
    # M0 chosen so M_l = 2**(4 (l + 1)) on the h_l = 2**-(l+3) ladder
    sched = CostSchedule(M0=2.0**-8, alpha=2.0, beta=0.5, h0=2.0**-3)
    assert sched.at_level(0) == pytest.approx(16.0, rel=1e-14)
    assert sched.at_level(1) == pytest.approx(256.0, rel=1e-14)
    for level in range(6):
        assert sched.at_level(level) == pytest.approx(2.0 ** (4 * (level + 1)), rel=1e-13)
    assert cost_per_eval(sched, 1, 2.0**-4) == sched.at_level(1)


def test_deterministic_beta_gives_constant_cost():
    sched = CostSchedule(M0=7.0, alpha=2.0, beta=math.inf, h0=0.25)
    assert [sched.at_level(l) for l in range(4)] == [7.0] * 4


def test_cost_monotone_in_level():
    sched = CostSchedule(M0=1.0, alpha=2.0, beta=0.5, h0=0.15625)
    costs = [sched.at_level(l) for l in range(8)]
    assert all(b >= a for a, b in zip(costs, costs[1:]))


def test_deterministic_oracle():
    oracle = DeterministicOracle(f2, M0=3.0)
    value, cost = oracle.evaluate([1.0, 2.0], level=5, key=123)
    assert value == 5.0 and cost == 3.0
    assert oracle.sigma == 0.0


def test_gaussian_oracle_mean_and_variance():
    sched = CostSchedule(M0=1.0, alpha=2.0, beta=0.5, h0=1.0)
    h = lambda level: 1.0 * 2.0**-level
    oracle = GaussianNoiseOracle(f2, variance_at=lambda l: h(l) ** 2, schedule=sched)
    x = np.array([0.3, 0.4])
    level = 2
    n = 20_000
    keys = chain(derive_key(9, Tag.ORACLE_DRAW, level), np.arange(n, dtype=np.int64))
    pts = np.broadcast_to(x, (n, 2))
    values, cost = oracle.evaluate_batch(pts, level, keys)
    assert cost == sched.at_level(level)
    true_var = h(level) ** 2
    se_mean = math.sqrt(true_var / n)
    assert abs(values.mean() - f2(x)[0]) < 3 * se_mean
    sample_var = values.var(ddof=1)
    se_var = true_var * math.sqrt(2.0 / (n - 1))
    assert abs(sample_var - true_var) < 3 * se_var


def test_gaussian_reproducible_and_order_free():
    sched = CostSchedule(M0=1.0, alpha=2.0, beta=0.5, h0=1.0)
    oracle = GaussianNoiseOracle(f2, variance_at=lambda l: 0.5, schedule=sched)
    keys = chain(derive_key(4, 1), np.arange(10, dtype=np.int64))
    pts = np.random.default_rng(0).random((10, 2))
    v1, _ = oracle.evaluate_batch(pts, 1, keys)
    # reversed evaluation order, same keys
    v2, _ = oracle.evaluate_batch(pts[::-1], 1, keys[::-1])
    assert np.array_equal(v1, v2[::-1])
    # single-point path agrees with the batch path
    v, _ = oracle.evaluate(pts[3], 1, keys[3])
    assert v == v1[3]


def test_monte_carlo_oracle_variance_quarter_percent():
    # g(x, Y) = f(x) + Y with unit-variance Y and M_l = 256 draws
    sched = CostSchedule(M0=1.0, alpha=2.0, beta=0.5, h0=1.0)  # 1 * h**-4
    level = 2  # M = (2**-2)**-4 = 256
    assert sched.at_level(level) == 256.0

    def sampler(x, size, rng):
        return f2(x)[0] + rng.standard_normal(size)

    oracle = MonteCarloOracle(sampler, schedule=sched)
    n = 1500
    keys = chain(derive_key(11, 2), np.arange(n, dtype=np.int64))
    pts = np.broadcast_to(np.array([0.1, 0.2]), (n, 2))
    values, cost = oracle.evaluate_batch(pts, level, keys)
    assert cost == 256.0
    true_var = 1.0 / 256.0
    sample_var = values.var(ddof=1)
    se_var = true_var * math.sqrt(2.0 / (n - 1))
    assert abs(sample_var - true_var) < 3 * se_var
    assert abs(values.mean() - f2(pts[:1])[0]) < 3 * math.sqrt(true_var / n)


def test_monte_carlo_reproducible():
    sched = CostSchedule(M0=1.0, alpha=1.0, beta=1.0, h0=1.0)

    def sampler(x, size, rng):
        return float(x[0]) + rng.standard_normal(size)

    oracle = MonteCarloOracle(sampler, schedule=sched)
    a, _ = oracle.evaluate([0.5, 0.5], 3, 77)
    b, _ = oracle.evaluate([0.5, 0.5], 3, 77)
    assert a == b
    c, _ = oracle.evaluate([0.5, 0.5], 3, 78)
    assert a != c


def test_domain_error():
    domain = Domain(lower=(0.0, 0.0), upper=(1.0, 1.0))
    oracle = DeterministicOracle(f2, domain=domain)
    with pytest.raises(ValueError, match="outside the domain"):
        oracle.evaluate([2.0, 0.5], 0, 1)


def test_averaged_mc_variance_tracks_cost():
    sched = CostSchedule(M0=1.0, alpha=2.0, beta=0.5, h0=0.15625)
    var = averaged_mc_variance(sched, 1.0)
    for level in range(5):
        assert var(level) == pytest.approx(1.0 / sched.at_level(level), rel=1e-14)
        # equivalently sigma * M**-beta squared
        assert math.sqrt(var(level)) == pytest.approx(
            sched.at_level(level) ** -0.5, rel=1e-14)


def test_cost_schedule_validation():
    with pytest.raises(ValueError, match="M0"):
        CostSchedule(M0=0.0, alpha=2.0, beta=0.5)
    with pytest.raises(ValueError, match="beta"):
        CostSchedule(M0=1.0, alpha=2.0, beta=0.0)
