"""Fine-tuning on categorical cloud labels with piecewise squared hinge losses."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BAND_NAMES, BAND_NAMES_NO_CIRRUS, COT_MAX
from .errors import BadThresholds, DimensionMismatch, EmptyValidation, IoError, ParseError, SchemaMismatch
from .features import normalize
from .mlp import Ensemble, Model, TrainConfig, adam_step, backward, forward, init_adam

CLEAR, SEMI, OPAQUE = 0, 1, 2
LABELS = ("clear", "semi", "opaque")


@dataclass(frozen=True)
class ThresholdSet:
    tau_semi: float = 0.75
    tau_opaque: float = 1.25
    tau_binary: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau_semi < self.tau_opaque <= COT_MAX:
            raise BadThresholds(
                f"need 0 < tau_semi < tau_opaque <= {COT_MAX}, got {self.tau_semi}, {self.tau_opaque}"
            )
        if not 0.0 < self.tau_binary <= COT_MAX:
            raise BadThresholds(f"need 0 < tau_binary <= {COT_MAX}, got {self.tau_binary}")


@dataclass(frozen=True)
class WeakSample:
    bands: tuple[float, ...]
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown weak label {self.label!r}")
        if not np.all(np.isfinite(self.bands)):
            raise ValueError("weak sample bands must be finite")


def label_index(label):
    return label if isinstance(label, (int, np.integer)) else LABELS.index(label)


def target_interval(label, t: ThresholdSet):
    """COT interval on which a pixel with this label incurs no loss."""
    if label == CLEAR:
        return -np.inf, t.tau_semi
    if label == SEMI:
        return t.tau_semi, t.tau_opaque
    return t.tau_opaque, np.inf


def weak_loss(p, label, t: ThresholdSet):
    """Loss and dloss/dp; zero inside the label's COT interval, half squared distance outside."""
    lo, hi = target_interval(label_index(label), t)
    if p < lo:
        return 0.5 * (p - lo) ** 2, p - lo
    if p > hi:
        return 0.5 * (p - hi) ** 2, p - hi
    return 0.0, 0.0


def weak_loss_batch(p, labels, t: ThresholdSet):
    """Vectorised :func:`weak_loss`; returns per-sample losses and derivatives."""
    p = np.asarray(p, dtype=np.float64)
    labels = np.asarray(labels)
    lo = np.where(labels == CLEAR, -np.inf, np.where(labels == SEMI, t.tau_semi, t.tau_opaque))
    hi = np.where(labels == CLEAR, t.tau_semi, np.where(labels == SEMI, t.tau_opaque, np.inf))
    excess = np.where(p < lo, p - lo, np.where(p > hi, p - hi, 0.0))
    return 0.5 * excess * excess, excess


@dataclass(frozen=True)
class WeakSet:
    """Column form of many :class:`WeakSample` rows."""

    bands: np.ndarray
    labels: np.ndarray
    band_names: tuple[str, ...] = BAND_NAMES

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def from_samples(cls, samples, band_names=BAND_NAMES):
        bands = np.array([s.bands for s in samples], dtype=np.float64).reshape(len(samples), -1)
        return cls(bands, np.array([label_index(s.label) for s in samples], dtype=np.int64), tuple(band_names))

    @classmethod
    def from_masks(cls, image, mask, band_names=BAND_NAMES):
        """Pixels of an ``H x W x C`` image paired with an ``H x W`` class mask."""
        image = np.asarray(image, dtype=np.float64)
        return cls(image.reshape(-1, image.shape[-1]), np.asarray(mask, dtype=np.int64).reshape(-1), tuple(band_names))


def _balanced_batch(rng, by_class, batch_size):
    present = [idx for idx in by_class if idx.size]
    per = np.full(len(present), batch_size // len(present))
    per[: batch_size - per.sum()] += 1
    return np.concatenate([idx[rng.integers(0, idx.size, size=k)] for idx, k in zip(present, per)])


def finetune(model, data: WeakSet, t: ThresholdSet, cfg: TrainConfig | None = None):
    """Refine a model (or every ensemble member) on weak labels.

    Batches draw equal shares from each label present in ``data``.  The
    pretraining normalizer is reused unchanged and no input noise is added.
    """
    cfg = cfg or TrainConfig(num_updates=10_000, learning_rate=1e-4, noise_level=0.0)
    if isinstance(model, Ensemble):
        return Ensemble([finetune(m, data, t, cfg) for m in model.members])
    if data.bands.shape[1] != model.input_dim:
        raise DimensionMismatch(f"weak data has {data.bands.shape[1]} bands, model expects {model.input_dim}")
    if len(data) == 0:
        raise EmptyValidation("no weak-label samples to fine-tune on")
    x = normalize(data.bands, model.normalizer)
    by_class = [np.flatnonzero(data.labels == c) for c in range(3)]
    params = model.params.copy()
    state = init_adam(params, cfg.learning_rate)
    rng = np.random.default_rng([int(cfg.seed), 4])
    for _ in range(cfg.num_updates):
        idx = _balanced_batch(rng, by_class, cfg.batch_size)
        p, cache = forward(params, x[idx])
        _, grad = weak_loss_batch(p, data.labels[idx], t)
        if not grad.any():
            continue
        params, state = adam_step(params, backward(params, cache, grad / idx.size), state)
    meta = dict(model.metadata, finetune_updates=cfg.num_updates, finetune_lr=cfg.learning_rate)
    return Model(params, model.normalizer, model.band_names, meta)


def mean_weak_loss(model, data: WeakSet, t: ThresholdSet):
    loss, _ = weak_loss_batch(model.predict(data.bands, clamp=False), data.labels, t)
    return float(loss.mean())


def load_weak_csv(path, cirrus_present=True) -> WeakSet:
    """Read a weak-label pixel file: band columns plus ``label`` in {clear, semi, opaque}."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read weak-label file {path}: {exc}") from exc
    rows = [(n, line) for n, line in enumerate(text.splitlines(), 1) if line.strip()]
    for n, line in rows:
        if line.startswith("#") and line[1:].replace(" ", "").lower() == "cirrus_present=false":
            cirrus_present = False
    rows = [(n, line) for n, line in rows if not line.startswith("#")]
    band_names = BAND_NAMES if cirrus_present else BAND_NAMES_NO_CIRRUS
    expected = list(band_names) + ["label"]
    if not rows:
        raise EmptyValidation(f"{path}: no header or rows")
    header = [h.strip() for h in rows[0][1].split(",")]
    if header != expected:
        raise SchemaMismatch(",".join(expected), ",".join(header))
    bands, labels = [], []
    for (n, _), row in zip(rows[1:], csv.reader(line for _, line in rows[1:])):
        if len(row) != len(expected):
            raise ParseError(n, "*", f"expected {len(expected)} fields, got {len(row)}")
        try:
            bands.append([float(v) for v in row[:-1]])
        except ValueError as exc:
            raise ParseError(n, "bands", str(exc)) from exc
        label = row[-1].strip()
        if label not in LABELS:
            raise ParseError(n, "label", f"unknown label {label!r}")
        labels.append(LABELS.index(label))
    if not labels:
        raise EmptyValidation(f"{path}: no labeled pixels")
    return WeakSet(np.array(bands).reshape(len(labels), len(band_names)), np.array(labels, dtype=np.int64), band_names)


def save_weak_csv(data: WeakSet, path):
    lines = []
    if "b10" not in data.band_names:
        lines.append("#cirrus_present=false")
    lines.append(",".join(list(data.band_names) + ["label"]))
    for row, lab in zip(data.bands, data.labels):
        lines.append(",".join([repr(float(v)) for v in row] + [LABELS[lab]]))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write weak-label file {path}: {exc}") from exc
