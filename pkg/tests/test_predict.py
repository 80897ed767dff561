import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflexnav.predict import NoForecast, Predictor, PredictorInput, predict
from reflexnav.simworld import GRAVITY

finite = st.floats(-50, 50, allow_nan=False)


def linear_window(p0, v, n=10, dt=0.02):
    t = dt * np.arange(n)
    P = np.asarray(p0, float) + t[:, None] * np.asarray(v, float)
    return PredictorInput(t, P, np.tile(np.asarray(v, float), (n, 1)))


def test_cv_extrapolates():
    inp = PredictorInput(np.array([0.0]), np.zeros((1, 3)), np.array([[1.0, 0, 0]]))
    f = predict(inp, 0.1, "cv")
    np.testing.assert_allclose(f.position, [0.1, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(f.velocity, [1, 0, 0])


def test_lsq_matches_cv_on_linear_window():
    inp = linear_window([1, -2, 0.5], [0.7, -1.3, 0.2])
    a, b = predict(inp, 0.1, "lsq"), predict(inp, 0.1, "cv")
    np.testing.assert_allclose(a.position, b.position, atol=1e-9)
    np.testing.assert_allclose(a.velocity, b.velocity, atol=1e-9)


def test_degree_two_exact_on_ballistic_window():
    t = 0.02 * np.arange(10)
    p0, v0 = np.array([3.0, 1.0, 1.0]), np.array([-2.0, 0.0, 3.0])
    P = p0 + t[:, None] * v0 + 0.5 * t[:, None] ** 2 * np.array([0, 0, -GRAVITY])
    V = v0 + t[:, None] * np.array([0, 0, -GRAVITY])
    f = predict(PredictorInput(t, P, V), 0.1, "lsq", degree=2)
    tf = t[-1] + 0.1
    z = p0[2] + v0[2] * tf - 0.5 * GRAVITY * tf ** 2
    assert abs(f.position[2] - z) < 1e-6


def test_empty_window_raises():
    empty = PredictorInput(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
    for backend in ("cv", "lsq", "identity"):
        with pytest.raises(NoForecast):
            predict(empty, 0.1, backend)


def test_lsq_single_sample_raises_but_predictor_falls_back():
    one = PredictorInput(np.array([0.0]), np.ones((1, 3)), np.array([[1.0, 0, 0]]))
    with pytest.raises(NoForecast):
        predict(one, 0.1, "lsq")
    np.testing.assert_allclose(Predictor()(one, 0.1).position, [1.1, 1, 1])


def test_non_increasing_times_rejected():
    with pytest.raises(ValueError):
        PredictorInput(np.array([0.0, 0.0]), np.zeros((2, 3)), np.zeros((2, 3)))


@given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite), st.tuples(finite, finite, finite),
       st.sampled_from(["cv", "lsq"]), st.integers(1, 2))
def test_shift_equivariance(p0, v, shift, backend, degree):
    inp = linear_window(p0, v)
    moved = PredictorInput(inp.times, inp.positions + np.asarray(shift), inp.velocities)
    a, b = predict(inp, 0.05, backend, degree), predict(moved, 0.05, backend, degree)
    np.testing.assert_allclose(b.position, a.position + np.asarray(shift), atol=1e-9)
    np.testing.assert_allclose(b.velocity, a.velocity, atol=1e-9)


@given(st.tuples(finite, finite, finite), st.integers(2, 12), st.integers(1, 2))
def test_degenerate_window(p, n, degree):
    t = 0.02 * np.arange(n)
    inp = PredictorInput(t, np.tile(p, (n, 1)), np.zeros((n, 3)))
    for backend in ("cv", "lsq"):
        f = predict(inp, 0.1, backend, degree)
        np.testing.assert_allclose(f.position, p, atol=1e-9)
        np.testing.assert_allclose(f.velocity, 0, atol=1e-9)


@given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite))
def test_zero_one_step_error_on_linear_motion(p0, v):
    inp = linear_window(p0, v)
    truth = np.asarray(p0) + (inp.times[-1] + 0.02) * np.asarray(v)
    for backend in ("cv", "lsq"):
        np.testing.assert_allclose(predict(inp, 0.02, backend).position, truth, atol=1e-8)
