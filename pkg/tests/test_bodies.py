import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from locwalk.bodies import (
    Ball,
    CenteredBall,
    Cone,
    Cube,
    DegenerateSampleWarning,
    Gaussian,
    Halfspace,
    ProductExponential,
    Slab,
    UniformOnBody,
    WeightedSample,
    axis,
    boundary_measure,
    make_body,
    make_density,
    make_set,
    mean_cov,
    normalized_weights,
    sample_iid,
    set_measure,
    whitening,
)
from locwalk.rng import stream


# ---------------------------------------------------------------- bodies


def test_cone_membership_examples():
    cone = make_body({"kind": "cone", "n": 16, "D": 8})
    assert cone.contains(np.r_[12.0, np.zeros(15)])
    assert not cone.contains(np.r_[4.0, np.zeros(15)])
    assert cone.diameter == 8


def test_ball_membership_and_diameter():
    ball = make_body({"kind": "ball", "n": 3, "R": 1.0})
    assert not ball.contains([0.0, 0.0, 1.0001])
    assert ball.contains([0.0, 0.0, 0.9999])
    assert ball.diameter == 2.0


def test_cube_diameter():
    assert make_body({"kind": "cube", "n": 4, "s": 2.0}).diameter == pytest.approx(4.0)


@pytest.mark.parametrize(
    "spec",
    [
        {"kind": "ball", "n": 0},
        {"kind": "ball", "n": 3, "R": -1.0},
        {"kind": "cube", "n": 2, "s": 0.0},
        {"kind": "cone", "n": 16, "D": 0.0},
        {"kind": "cone", "n": 1, "D": 1.0},
        {"kind": "simplex", "n": 3},
    ],
)
def test_make_body_rejects_bad_specs(spec):
    with pytest.raises(ValueError):
        make_body(spec)


def test_cone_warns_outside_range():
    with pytest.warns(UserWarning):
        make_body({"kind": "cone", "n": 16, "D": 20})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_body({"kind": "cone", "n": 16, "D": 8})


def test_cone_membership_matches_definition():
    n, D = 16, 8.0
    cone = Cone(n, D)
    pts = stream(1).uniform(-2, 18, size=(20000, n)) * np.r_[1.0, np.full(n - 1, 0.3)]
    x1, rest = pts[:, 0], np.sum(pts[:, 1:] ** 2, axis=1)
    want = (0 <= x1) & (x1 <= n) & (rest <= x1**2 / n) & ((x1 - n) ** 2 + rest <= D * D)
    assert np.array_equal(cone.contains(pts), want)


@given(st.floats(4.0, 7.9), st.floats(0.0, 4.0), st.integers(0, 2**31))
def test_cone_monotone_in_depth(D, extra, seed):
    n = 16
    small, big = Cone(n, D), Cone(n, D + extra)
    pts = stream(seed).uniform(0, n, size=(500, n)) * np.r_[1.0, np.full(n - 1, 0.25)]
    inside = small.contains(pts)
    assert np.all(big.contains(pts[inside]))


@pytest.mark.parametrize("body", [Ball(3, 1.5), Cube(4, 2.0), Cone(16, 8.0)], ids=["ball", "cube", "cone"])
def test_inside_points_within_bounding_radius(body):
    lo, hi = body.bounding_box()
    pts = stream(2).uniform(lo, hi, size=(20000, body.dim))
    if isinstance(body, Cone):
        # shrink toward the axis, otherwise almost nothing lands inside in 16 dimensions
        pts[:, 1:] *= 0.2
    inside = pts[body.contains(pts)]
    assert len(inside) > 0
    assert np.all(np.linalg.norm(inside - body.center, axis=1) <= body.bounding_radius + 1e-12)


def test_membership_deterministic():
    cone = Cone(16, 8.0)
    pts = stream(3).uniform(0, 16, size=(100, 16))
    assert np.array_equal(cone.contains(pts), cone.contains(pts.copy()))


# ------------------------------------------------------------- densities


def test_gaussian_log_density_difference():
    g = make_density({"kind": "gaussian", "n": 1})
    assert g.log_density([0.0]) - g.log_density([1.0]) == pytest.approx(0.5)


def test_product_exponential_unit_variance():
    x = sample_iid(make_density({"kind": "product_exponential", "n": 1}), 10**6, stream(4)).points[:, 0]
    assert abs(x.var() - 1.0) < 0.01
    d = ProductExponential(1)
    assert d.log_density([0.0]) - d.log_density([1.0]) == pytest.approx(math.sqrt(2))


def test_uniform_log_density_flat_and_infinite_outside():
    u = make_density({"kind": "uniform_on_body", "body": {"kind": "ball", "n": 2, "R": 1.0}})
    assert u.log_density([0.1, 0.2]) == u.log_density([-0.5, 0.3])
    assert u.log_density([1.0, 1.0]) == -math.inf


def test_gaussian_tilted_log_density():
    base = Gaussian(3)
    c, t = np.array([0.5, -1.0, 2.0]), 0.7
    tilted = make_density({"kind": "gaussian_tilted", "base": {"kind": "gaussian", "n": 3}, "c": c, "t": t})
    rng = stream(5)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    want = lambda z: base.log_density(z) + c @ z - 0.5 * t * z @ z  # noqa: E731
    assert tilted.log_density(x) - tilted.log_density(y) == pytest.approx(want(x) - want(y), rel=1e-12)


def test_unsupported_density():
    with pytest.raises(ValueError):
        make_density({"kind": "student_t", "n": 2})


# --------------------------------------------------------------- samples


def test_sample_iid_mean_and_determinism():
    d = Gaussian(4)
    s = sample_iid(d, 10**5, stream(6))
    assert np.all(np.abs(s.points.mean(axis=0)) < 0.02)
    assert np.array_equal(s.points, sample_iid(d, 10**5, stream(6)).points)
    assert sample_iid(d, 0, stream(6)).size == 0


def test_sample_iid_needs_sampler():
    with pytest.raises(ValueError):
        sample_iid(UniformOnBody(Cone(16, 8.0)), 10, stream(0))


def test_rejection_sampler_stays_inside():
    body = Cone(4, 3.0)
    pts = sample_iid(UniformOnBody(body), 2000, stream(7)).points
    assert body.contains(pts).all()


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-700, 50)))
def test_normalized_weights_sum_to_one(lw):
    w = normalized_weights(lw)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-12


def test_mean_cov_examples():
    mu, A = mean_cov(WeightedSample.unit([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.allclose(mu, 0) and np.allclose(A, [[1.0, 0.0], [0.0, 0.0]])
    with pytest.warns(DegenerateSampleWarning):
        _, A = mean_cov(WeightedSample.unit([[1.0, 2.0]]))
    assert np.array_equal(A, np.zeros((2, 2)))


def test_mean_cov_gaussian_identity():
    _, A = mean_cov(sample_iid(Gaussian(8), 10**5, stream(8)))
    assert np.max(np.abs(A - np.eye(8))) <= 0.05


@given(st.integers(0, 2**31), arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
def test_mean_cov_translation(seed, v):
    rng = stream(seed)
    pts = rng.standard_normal((50, 3))
    lw = rng.standard_normal(50)
    mu, A = mean_cov(WeightedSample(pts, lw))
    mu2, A2 = mean_cov(WeightedSample(pts + v, lw))
    assert np.allclose(mu2, mu + v, rtol=0, atol=1e-9 * (1 + np.abs(v).max()))
    assert np.allclose(A2, A, rtol=0, atol=1e-8 * (1 + np.abs(v).max()) ** 2)


def test_whitening_spectrum_of_scaled_gaussian():
    pts = sample_iid(Gaussian(3), 50000, stream(9)).points * np.array([1.0, 2.0, 3.0])
    mu, W, lam = whitening(WeightedSample.unit(pts))
    assert np.allclose(np.sort(lam), [1, 4, 9], rtol=0.05)
    _, A = mean_cov(WeightedSample.unit((pts - mu) @ W.T))
    assert np.allclose(A, np.eye(3), atol=1e-10)


def test_csv_round_trip():
    rng = stream(10)
    s = WeightedSample(rng.standard_normal((5, 3)), rng.standard_normal(5))
    text = s.to_csv()
    assert text.splitlines()[0] == "x_1,x_2,x_3,log_w"
    back = WeightedSample.from_csv(text)
    assert np.array_equal(back.points, s.points) and np.array_equal(back.log_weights, s.log_weights)


# ------------------------------------------------------------------ sets


def test_set_measure_examples():
    pts = sample_iid(Gaussian(2), 20000, stream(11)).points
    sym = WeightedSample.unit(np.vstack([pts, -pts]))
    assert set_measure(sym, Halfspace(axis(2), 0.0)) == pytest.approx(0.5, abs=1e-3)
    assert set_measure(sym, Halfspace(axis(2), math.inf)) == 0.0
    assert set_measure(sym, CenteredBall(math.inf)) == 1.0


@given(
    st.integers(0, 2**31),
    st.sampled_from(
        [
            {"kind": "halfspace", "theta": [1.0, 1.0], "b": 0.3},
            {"kind": "slab", "theta": [0.0, 1.0], "lo": -0.5, "hi": 0.2},
            {"kind": "ball", "r": 1.1},
        ]
    ),
)
def test_complement_measures_sum_to_one(seed, spec):
    rng = stream(seed)
    s = WeightedSample(rng.standard_normal((200, 2)), rng.standard_normal(200))
    S = make_set(spec)
    assert set_measure(s, S) + set_measure(s, S.complement()) == 1.0


def test_boundary_measure_examples():
    d = Gaussian(1)
    s = sample_iid(d, 2 * 10**6, stream(12))
    assert boundary_measure(d, Halfspace([1.0], 0.0), 1e-2, s) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=0.01)
    assert boundary_measure(d, CenteredBall(math.inf), 1e-3, s) == 0.0
    assert boundary_measure(d, Halfspace([1.0], 20.0), 1e-3, s) == 0.0
    with pytest.raises(ValueError):
        boundary_measure(d, Halfspace([1.0], 0.0), 0.0, s)


def test_boundary_measure_h_consistency():
    d = Gaussian(2)
    s = sample_iid(d, 10**6, stream(13))
    S = CenteredBall(1.0)
    h = 0.02
    a, b = boundary_measure(d, S, h, s), boundary_measure(d, S, h / 2, s)
    # counts in the thin shells are Poisson; the coarser estimate has ~1/sqrt(2) the error
    se = math.sqrt(a / (h * s.size)) + math.sqrt(b / (h / 2 * s.size))
    assert abs(a - b) <= 2 * se + 0.5 * h * a  # second-order curvature bias


def test_slab_enlarge_and_erode():
    S = Slab(axis(2), -1.0, 1.0)
    assert S.enlarge(0.5).to_spec()["lo"] == -1.5
    assert S.erode(0.5).to_spec()["hi"] == 0.5
