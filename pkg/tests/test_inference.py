import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cotmask.core import BAND_NAMES
from cotmask.errors import DimensionMismatch, EmptyMask, WindowTooLarge
from cotmask.features import Normalizer
from cotmask.inference import (
    binary_cloud_mask,
    classify_cot,
    image_level_label,
    predict_raster,
    run_inference,
    smooth_cot_map,
)
from cotmask.mlp import Model, init_mlp
from cotmask.weak_finetune import ThresholdSet

T = ThresholdSet(0.75, 1.25)


@pytest.fixture
def model():
    p = init_mlp(12, 16, 5, seed=3)
    p.biases[-1][:] = 1.0
    return Model(p, Normalizer(np.full(12, 0.2), np.full(12, 0.1), np.full(12, 0.2)), BAND_NAMES)


def test_one_pixel_raster(model):
    px = np.random.default_rng(0).uniform(0, 0.5, 12)
    out = predict_raster(model, px.reshape(1, 1, 12))
    assert out.shape == (1, 1) and out[0, 0] == model.predict(px[None])[0]


def test_constant_raster_gives_constant_map(model):
    img = np.broadcast_to(np.linspace(0.1, 0.4, 12), (9, 7, 12))
    out = predict_raster(model, img)
    assert np.all(out == out[0, 0])


def test_band_count_checked(model):
    with pytest.raises(DimensionMismatch):
        predict_raster(model, np.zeros((2, 2, 11)))


def brute_smooth(c, m):
    h, w = c.shape
    total = np.zeros_like(c)
    count = np.zeros_like(c)
    for i in range(h - m + 1):
        for j in range(w - m + 1):
            mean = c[i:i + m, j:j + m].mean()
            total[i:i + m, j:j + m] += mean
            count[i:i + m, j:j + m] += 1
    return total / count


def test_smoothing_hand_case():
    np.testing.assert_array_equal(smooth_cot_map(np.array([[0.0, 4.0], [4.0, 8.0]]), 2), np.full((2, 2), 4.0))


def test_smoothing_identity_and_errors():
    c = np.random.default_rng(0).uniform(0, 50, (5, 6))
    np.testing.assert_array_equal(smooth_cot_map(c, 1), c)
    with pytest.raises(WindowTooLarge):
        smooth_cot_map(c, 6)
    with pytest.raises(WindowTooLarge):
        smooth_cot_map(c, 0)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(0, 50)),
       st.integers(1, 4))
def test_smoothing_matches_brute_force(c, m):
    if m > min(c.shape):
        return
    out = smooth_cot_map(c, m)
    np.testing.assert_allclose(out, brute_smooth(c, m), rtol=1e-12, atol=1e-12)
    assert out.min() >= c.min() - 1e-9 and out.max() <= c.max() + 1e-9


@given(st.floats(0, 50), st.integers(1, 9), st.integers(1, 9))
def test_smoothing_keeps_constants(v, h, w):
    out = smooth_cot_map(np.full((h, w), v), min(2, h, w))
    np.testing.assert_allclose(out, v, rtol=1e-12)


def test_classification_boundaries():
    c = np.array([0.5, 0.75, 1.0, 1.25, 40.0])
    assert classify_cot(c, T).tolist() == [0, 1, 1, 2, 2]
    assert binary_cloud_mask(np.array([0.49, 0.5]), 0.5).tolist() == [0, 1]


@given(arrays(np.float64, 20, elements=st.floats(0, 45)), st.floats(0, 5))
def test_classification_is_monotone(c, shift):
    assert np.all(classify_cot(c + shift, T) >= classify_cot(c, T))


def test_image_level_label():
    assert image_level_label(np.zeros((20, 20), int)) == "clear"
    mask = np.zeros((20, 20), int)
    mask[7, 3] = 1
    assert image_level_label(mask) == "cloudy"
    assert image_level_label(np.array([[0.2, 0.6]]), tau_binary=0.5) == "cloudy"
    with pytest.raises(EmptyMask):
        image_level_label(np.zeros((0, 0)))


def test_run_inference_window_one_equals_no_smoothing(model):
    img = np.random.default_rng(2).uniform(0, 0.6, (6, 6, 12))
    a = run_inference(model, img, T, m=1)
    b = run_inference(model, img, T, smooth=False)
    np.testing.assert_array_equal(a.smoothed, b.smoothed)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.verdict == b.verdict
