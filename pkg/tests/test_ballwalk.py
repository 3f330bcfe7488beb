import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from locwalk.ballwalk import (
    WalkParams,
    WalkState,
    acceptance_probability,
    ball_walk_step,
    check_cone_range,
    cone_mixing_experiment,
    drift_estimate,
    hitting_steps,
    local_conductance,
    proper_step_drift,
    run_chain,
    sample_cone_slab,
)
from locwalk.bodies import Ball, Cone, Cube, Gaussian, UniformOnBody, cone_start, uniform_unit_ball
from locwalk.rng import stream

seeds = st.integers(0, 2**31)


def test_interior_step_always_proper():
    body = Ball(3, 1.0)
    rng = stream(0)
    s = WalkState(np.zeros(3))
    for _ in range(50):
        t, proper = ball_walk_step(WalkState(np.zeros(3)), body, 0.5, rng)
        assert proper and t.proper_steps == 1
    assert s.total_steps == 0


def test_rejected_step_is_bit_identical():
    body = Cube(2, 1.0)
    x = np.array([0.5, 0.5])  # corner: most proposals leave the square
    rng = stream(1)
    rejected = 0
    for _ in range(200):
        st_, proper = ball_walk_step(WalkState(x), body, 0.3, rng)
        if not proper:
            rejected += 1
            assert st_.x.tobytes() == x.tobytes()
            assert st_.total_steps == 1 and st_.proper_steps == 0
    assert rejected > 100


def test_uphill_move_accepted():
    g = Gaussian(2)
    assert acceptance_probability(g, [1.0, 0.0], [0.5, 0.0]) == 1.0
    assert acceptance_probability(g, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(math.exp(-0.5))
    assert acceptance_probability(Ball(2, 1.0), [0.0, 0.0], [2.0, 0.0]) == 0.0


def test_step_from_outside_support_fails():
    with pytest.raises(ValueError):
        ball_walk_step(WalkState(np.array([2.0, 0.0])), Ball(2, 1.0), 0.1, stream(0))
    with pytest.raises(ValueError):
        WalkState(np.zeros(2), proper_steps=3, total_steps=1)
    with pytest.raises(ValueError):
        WalkParams(delta=0.0, max_steps=10)


@given(seeds)
def test_uniform_acceptance_symmetric(seed):
    # for a uniform target the filter is symmetric, so with a symmetric proposal
    # the kernel satisfies detailed balance
    rng = stream(seed)
    body = Cube(3, 2.0)
    x = rng.uniform(-1, 1, 3)
    y = x + 0.3 * uniform_unit_ball(1, 3, rng)[0]
    assume(body.contains(y))
    assert acceptance_probability(body, x, y) == acceptance_probability(body, y, x)


@given(seeds)
def test_metropolis_detailed_balance(seed):
    rng = stream(seed)
    g = Gaussian(3)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    lhs = math.exp(g.log_density(x)) * acceptance_probability(g, x, y)
    rhs = math.exp(g.log_density(y)) * acceptance_probability(g, y, x)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_local_conductance_examples():
    rng = stream(2)
    assert local_conductance(Ball(3, 1.0), np.zeros(3), 0.1, 1000, rng).estimate == 1.0
    c = local_conductance(Cube(2, 1.0), [0.5, 0.5], 0.01, 20000, rng)
    assert abs(c.estimate - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / 20000)
    f = local_conductance(Cube(2, 1.0), [0.5, 0.0], 0.01, 20000, rng)
    assert abs(f.estimate - 0.5) <= 3 * math.sqrt(0.25 / 20000)


def test_run_chain_basic():
    body = Ball(2, 1.0)
    res = run_chain(body, [0.0, 0.0], WalkParams(5.0, 500), rng=stream(3))
    assert 0.0 <= res.proper_fraction <= 1.0
    with pytest.raises(ValueError):
        run_chain(body, [0.0, 0.0], WalkParams(0.1, 0))


def test_run_chain_deterministic_and_thinned():
    p = WalkParams(0.3, 1000, thin=10)
    obs = {"x1": lambda x: x[0], "norm": lambda x: float(np.linalg.norm(x))}
    a = run_chain(Ball(3, 1.0), np.zeros(3), p, obs, stream(4))
    b = run_chain(Ball(3, 1.0), np.zeros(3), p, obs, stream(4))
    assert a.positions.shape == (100, 3)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.series["x1"], a.positions[:, 0])


def test_long_run_mean_and_halfspace():
    body = Ball(2, 1.0)
    res = run_chain(body, np.zeros(2), WalkParams(0.5, 200_000, thin=20), rng=stream(5))
    x = res.positions
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)
    # area fraction of {x1 >= 1/2} in the unit disc
    frac = (math.acos(0.5) - 0.5 * math.sqrt(0.75)) / math.pi
    # thinned samples are still correlated; allow an effective size of a quarter
    se = math.sqrt(frac * (1 - frac) / (len(x) / 4))
    assert abs(np.mean(x[:, 0] >= 0.5) - frac) <= 3 * se


def test_proper_fraction_matches_mean_conductance():
    body = Cube(2, 1.0)
    delta = 0.4
    res = run_chain(body, np.zeros(2), WalkParams(delta, 40_000, thin=40), rng=stream(6))
    rng = stream(7)
    ell = np.mean([local_conductance(body, x, delta, 400, rng).estimate for x in res.positions])
    steps = res.total_steps
    se = math.sqrt(ell * (1 - ell) / (steps / 10)) + math.sqrt(ell * (1 - ell) / (400 * len(res.positions)))
    assert abs(res.proper_fraction - ell) <= 3 * se


def test_slab_sampler_inside():
    cone = Cone(16, 8.0)
    t0 = cone_start(16, 8.0)
    pts = sample_cone_slab(cone, t0, t0 + 1, 500, stream(8))
    assert cone.contains(pts).all()
    assert np.all((pts[:, 0] >= t0) & (pts[:, 0] <= t0 + 1))


def test_cone_range_checks():
    with pytest.raises(ValueError):
        check_cone_range(9, 6.0)
    with pytest.raises(ValueError):
        cone_mixing_experiment(16, 9.0, chains=2)
    with pytest.raises(ValueError):
        drift_estimate(16, 8.0, None, 5.0, 100, stream(0))
    with pytest.raises(ValueError):
        drift_estimate(16, 8.0, None, None, 0, stream(0))


def test_cone_mixing_n16():
    rows = cone_mixing_experiment(16, 8.0, chains=32, seed=0)
    steps = [r.proper_steps for r in rows]
    assert not any(r.censored for r in rows)
    assert np.median(steps) > 16
    assert all(r.proper_steps <= r.total_steps for r in rows)


def test_start_on_base_needs_no_steps():
    n = 16
    cone = Cone(n, 8.0)
    starts = sample_cone_slab(cone, n - 0.9, n - 0.5, 8, stream(1))
    res = hitting_steps(cone, starts, 0.25, n - 1.0, 1000, [stream(1, i) for i in range(8)])
    assert np.all(res.proper_steps == 0) and np.all(res.total_steps == 0)


def test_smallest_depth_mixes_faster():
    n = 16
    fast = cone_mixing_experiment(n, 2 * math.sqrt(n), chains=16, seed=1)
    slow = cone_mixing_experiment(n, n / 2, chains=16, seed=1)
    assert np.median([r.proper_steps for r in fast]) <= np.median([r.proper_steps for r in slow])


def test_cone_mixing_reproducible():
    a = cone_mixing_experiment(16, 8.0, chains=4, seed=3)
    b = cone_mixing_experiment(16, 8.0, chains=4, seed=3)
    assert a == b


def test_cube_drift_zero():
    body = Cube(16, 2.0)
    rng = stream(9)
    starts = np.hstack([np.full((100_000, 1), 0.3), rng.uniform(-1, 1, (100_000, 15))])
    d = proper_step_drift(body, starts, 0.25, rng)
    assert abs(d.drift) <= 3 * d.stderr


def test_cone_drift_positive():
    d = drift_estimate(16, 8.0, None, None, 200_000, stream(10))
    assert d.drift > 3 * d.stderr
