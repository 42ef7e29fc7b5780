"""Input normalization and training-time noise augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyDataset

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Normalizer:
    """Per-feature statistics fitted on the training set.

    ``mean_abs`` is the average magnitude of each feature; the noise scale at
    any level ``q`` is ``q * mean_abs``, so evaluation-time noise uses the
    same rule as training noise.
    """

    mean: np.ndarray
    std: np.ndarray
    mean_abs: np.ndarray
    noise_level: float = 0.0

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def noise_sigma(self):
        return self.noise_level * self.mean_abs

    def sigma_at(self, level):
        return level * self.mean_abs

    def with_noise_level(self, level) -> Normalizer:
        return Normalizer(self.mean, self.std, self.mean_abs, float(level))


def fit_normalizer(train, noise_level: float = 0.03) -> Normalizer:
    """Fit mean/std (population) and mean |x| per column of ``train``.

    ``train`` is a :class:`~cotmask.core.Dataset` or an ``(n, d)`` array.
    """
    x = np.asarray(getattr(train, "bands", train), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EmptyDataset("need at least 2 training samples to fit a normalizer")
    return Normalizer(
        mean=x.mean(axis=0),
        std=np.maximum(x.std(axis=0), STD_FLOOR),
        mean_abs=np.abs(x).mean(axis=0),
        noise_level=float(noise_level),
    )


def _check(x, nz):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != nz.dim:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, normalizer expects {nz.dim}")
    return x


def normalize(x, nz: Normalizer):
    x = _check(x, nz)
    return (x - nz.mean) / nz.std


def denormalize(z, nz: Normalizer):
    return np.asarray(z) * nz.std + nz.mean


def add_noise(x, sigma, rng: np.random.Generator):
    """Add independent zero-mean Gaussian noise with per-feature std ``sigma``."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.standard_normal(x.shape) * sigma


def augment_and_normalize(x, nz: Normalizer, rng: np.random.Generator):
    x = _check(x, nz)
    return ((x + rng.standard_normal(x.shape) * nz.noise_sigma) - nz.mean) / nz.std
