"""Per-pixel COT maps, overlap-averaged window smoothing and cloud masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import COT_MAX
from .errors import DimensionMismatch, EmptyMask, WindowTooLarge
from .ingest import RasterImage
from .weak_finetune import CLEAR, OPAQUE, SEMI, ThresholdSet

DEFAULT_WINDOW = 2


def predict_raster(model, img) -> np.ndarray:
    """COT for every pixel of an ``H x W x C`` image, clamped to [0, 50]."""
    data = img.data if isinstance(img, RasterImage) else np.asarray(img)
    if data.ndim != 3:
        raise DimensionMismatch(f"expected an H x W x C image, got shape {data.shape}")
    h, w, c = data.shape
    if c != model.input_dim:
        raise DimensionMismatch(f"image has {c} bands, model expects {model.input_dim}")
    flat = data.reshape(h * w, c).astype(np.float64)
    if flat.shape[0] == 0:
        return np.zeros((h, w))
    return np.clip(model.predict(flat), 0.0, COT_MAX).reshape(h, w)


def _box_sum(a, m):
    return sliding_window_view(a, (m, m)).sum(axis=(2, 3))


def smooth_cot_map(c, m: int = DEFAULT_WINDOW) -> np.ndarray:
    """Stride-1 ``m x m`` window means, spread back and averaged per cell.

    Every fully-inside window deposits its mean on each of its cells; a cell's
    output is the average of the deposits it received.  Border cells are
    covered by fewer windows.  ``m = 1`` is the identity.
    """
    c = np.asarray(c, dtype=np.float64)
    h, w = c.shape
    if m < 1 or m > min(h, w):
        raise WindowTooLarge(f"window {m} does not fit a {h}x{w} map")
    if m == 1:
        return c.copy()
    means = _box_sum(c, m) / (m * m)
    pad = ((m - 1, m - 1), (m - 1, m - 1))
    deposits = _box_sum(np.pad(means, pad), m)
    counts = _box_sum(np.pad(np.ones_like(means), pad), m)
    return deposits / counts


def classify_cot(c, t: ThresholdSet) -> np.ndarray:
    """Clear below tau_semi, opaque from tau_opaque up, semi-transparent in between."""
    c = np.asarray(c, dtype=np.float64)
    return np.where(c >= t.tau_opaque, OPAQUE, np.where(c >= t.tau_semi, SEMI, CLEAR)).astype(np.int64)


def binary_cloud_mask(c, tau_binary):
    return (np.asarray(c) >= tau_binary).astype(np.int64)


def image_level_label(mask, tau_binary=None) -> str:
    """An image is cloudy as soon as one pixel is.

    With ``tau_binary`` the input is read as a COT map; otherwise as a class
    mask where any non-clear label counts as cloud.
    """
    mask = np.asarray(mask)
    if mask.size == 0:
        raise EmptyMask("cannot label an empty image")
    cloudy = np.any(mask >= tau_binary) if tau_binary is not None else np.any(mask != CLEAR)
    return "cloudy" if cloudy else "clear"


@dataclass
class InferenceResult:
    cot: np.ndarray
    smoothed: np.ndarray
    mask: np.ndarray
    verdict: str


def run_inference(model, img, thresholds: ThresholdSet, m: int = DEFAULT_WINDOW,
                  smooth: bool = True, smooth_first: bool = True) -> InferenceResult:
    """Predict, smooth, threshold and decide for one image.

    The image-level verdict uses the class mask: any semi-transparent or
    opaque pixel makes the image cloudy.
    """
    cot = predict_raster(model, img)
    smoothed = smooth_cot_map(cot, m) if smooth else cot
    if smooth_first:
        mask = classify_cot(smoothed, thresholds)
    else:
        # threshold first, then smooth the class labels and round back
        mask = np.rint(smooth_cot_map(classify_cot(cot, thresholds).astype(float), m if smooth else 1)).astype(np.int64)
    return InferenceResult(cot, smoothed, mask, image_level_label(mask))
