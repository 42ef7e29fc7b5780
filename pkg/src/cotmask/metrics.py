"""Regression and segmentation metrics, noise-level evaluation, threshold search."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadConfig,
    DimensionMismatch,
    EmptyMatrix,
    EmptyValidation,
    IoError,
    LabelOutOfRange,
    LengthMismatch,
)
from .features import add_noise
from .surrogate_rt import FAMILIES
from .weak_finetune import ThresholdSet

PAPER_NOISE_LEVELS = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05)


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} predictions vs {y.size} targets")
    if p.size == 0:
        raise EmptyValidation("MAE of an empty set is undefined")
    return float(np.mean(np.abs(p - y)))


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns are predictions."""

    counts: np.ndarray

    @property
    def k(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)


def accumulate_confusion(pred, gt, k) -> ConfusionMatrix:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction shape {pred.shape} vs ground truth {gt.shape}")
    pred = pred.reshape(-1).astype(np.int64)
    gt = gt.reshape(-1).astype(np.int64)
    for a in (pred, gt):
        if a.size and (a.min() < 0 or a.max() >= k):
            raise LabelOutOfRange(f"labels must lie in [0, {k})")
    counts = np.bincount(gt * k + pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    iou: np.ndarray
    micro_f1: float

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())

    @property
    def miou(self):
        return float(self.iou.mean())


def per_class_scores(cm: ConfusionMatrix) -> ClassScores:
    """Per-class precision, recall, F1 and IoU; any 0/0 is scored 0."""
    c = np.asarray(cm.counts, dtype=np.float64)
    if c.sum() <= 0:
        raise EmptyMatrix("confusion matrix has no counts")
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    iou = _ratio(tp, tp + fp + fn)
    return ClassScores(precision, recall, f1, iou, float(tp.sum() / c.sum()))


# --- regression evaluation under input noise ---------------------------------

@dataclass
class RegressionTable:
    noise_levels: tuple[float, ...]
    maes: list[float]
    family_maes: dict[str, float] = field(default_factory=dict)

    @property
    def average(self):
        return float(np.mean(self.maes))

    def rows(self):
        out = [(f"Test-{round(100 * q)}%", m) for q, m in zip(self.noise_levels, self.maes)]
        out.append(("Average", self.average))
        out += [(f"Family-{name}", m) for name, m in self.family_maes.items()]
        return out


def noisy_inputs(model, x, level, seed, level_index):
    """Test inputs with noise of std ``level * mean|x_j|`` (training-set magnitudes)."""
    if level == 0:
        return np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng([int(seed), 5, int(level_index)])
    return add_noise(x, model.normalizer.sigma_at(level), rng)


def evaluate_regression(model, test, noise_levels=PAPER_NOISE_LEVELS, seed=0, per_family=False) -> RegressionTable:
    """MAE of ``model`` on ``test`` at each noise level.

    The noise draw for level ``i`` depends only on ``(seed, i)``, so different
    models evaluated with the same seed and normalizer see identical inputs.
    With ``per_family`` the table also holds, per surface family, the MAE
    averaged over all noise levels.
    """
    levels = tuple(float(q) for q in noise_levels)
    if not levels:
        raise BadConfig("need at least one noise level")
    maes = []
    fam_err = np.zeros(len(test))
    families = np.asarray(test.surface_id) // 100 - 1
    for i, q in enumerate(levels):
        err = np.abs(model.predict(noisy_inputs(model, test.bands, q, seed, i)) - test.cot)
        maes.append(float(err.mean()))
        fam_err += err
    table = RegressionTable(levels, maes)
    if per_family:
        fam_err /= len(levels)
        for f, name in enumerate(FAMILIES):
            sel = families == f
            if sel.any():
                table.family_maes[name] = float(fam_err[sel].mean())
    return table


def write_table_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def read_table_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def segmentation_rows(scores: ClassScores, class_names):
    """Table-3/4 style rows: averages first, then per class."""
    rows = [("F1-avg", scores.macro_f1)]
    rows += [(f"F1-{n}", float(v)) for n, v in zip(class_names, scores.f1)]
    rows += [("Rec-avg", scores.macro_recall)]
    rows += [(f"Rec-{n}", float(v)) for n, v in zip(class_names, scores.recall)]
    rows += [("Prec-avg", scores.macro_precision)]
    rows += [(f"Prec-{n}", float(v)) for n, v in zip(class_names, scores.precision)]
    rows += [("mIoU", scores.miou)]
    rows += [(f"IoU-{n}", float(v)) for n, v in zip(class_names, scores.iou)]
    rows += [("F1-micro", scores.micro_f1)]
    return rows


# --- threshold calibration ----------------------------------------------------

def threshold_grid(lo, hi, step):
    if not (step > 0 and hi > lo >= 0):
        raise BadConfig(f"bad threshold grid ({lo}, {hi}, {step})")
    n = int(np.floor((hi - lo) / step + 1e-9))
    grid = np.round(lo + step * np.arange(n + 1), 10)
    return grid[grid > 0]


def _f1(tp, pred_total, true_total):
    return _ratio(2.0 * tp, pred_total + true_total)


@dataclass
class Calibration:
    thresholds: ThresholdSet
    objective: float
    mode: str


def three_class_f1_surface(pred, labels, grid):
    """Macro F1 for every (tau_semi, tau_opaque) pair on ``grid``; NaN where tau_semi >= tau_opaque."""
    pred = np.asarray(pred, dtype=np.float64)
    labels = np.asarray(labels)
    n_c = np.array([(labels == c).sum() for c in range(3)], dtype=np.float64)
    # below[c, j] = number of class-c pixels predicted below grid[j]
    below = np.array([np.searchsorted(np.sort(pred[labels == c]), grid, side="left") for c in range(3)],
                     dtype=np.float64)
    a = below[:, :, None]  # tau_semi index on axis 1
    b = below[:, None, :]  # tau_opaque index on axis 2
    f_clear = _f1(a[0], a.sum(axis=0), n_c[0])
    semi_pred = b - a
    f_semi = _f1(semi_pred[1], semi_pred.sum(axis=0), n_c[1])
    opaque_pred = n_c[:, None, None] - b
    f_opaque = _f1(opaque_pred[2], opaque_pred.sum(axis=0), n_c[2])
    macro = (f_clear + f_semi + f_opaque) / 3.0
    valid = grid[:, None] < grid[None, :]
    return np.where(valid, macro, np.nan)


def binary_f1_curve(pred, cloudy, grid):
    """Macro F1 of the clear/cloudy split ``pred >= t`` for every grid threshold."""
    pred = np.asarray(pred, dtype=np.float64)
    cloudy = np.asarray(cloudy, dtype=bool)
    cloudy_p, clear_p = np.sort(pred[cloudy]), np.sort(pred[~cloudy])
    n_cloudy, n_clear = float(cloudy_p.size), float(clear_p.size)
    cloudy_below = np.searchsorted(cloudy_p, grid, side="left").astype(np.float64)
    clear_below = np.searchsorted(clear_p, grid, side="left").astype(np.float64)
    f_clear = _f1(clear_below, clear_below + cloudy_below, n_clear)
    tp = n_cloudy - cloudy_below
    f_cloudy = _f1(tp, tp + (n_clear - clear_below), n_cloudy)
    return (f_clear + f_cloudy) / 2.0


def calibrate_from_predictions(pred, labels, grid=(0.0, 50.0, 0.25), mode="three_class",
                               base: ThresholdSet | None = None) -> Calibration:
    """Exhaustive grid search maximizing macro F1.

    Three-class mode scores every ``tau_semi < tau_opaque`` pair and breaks
    ties toward the smaller ``tau_semi``, then the smaller ``tau_opaque``.
    Binary mode (label 0 clear, anything else cloudy) breaks ties toward the
    larger threshold, i.e. toward fewer cloudy predictions.
    """
    base = base or ThresholdSet()
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if pred.size == 0:
        raise EmptyValidation("no validation pixels")
    g = threshold_grid(*grid)
    if mode == "binary":
        curve = binary_f1_curve(pred, labels != 0, g)
        best = len(g) - 1 - int(np.argmax(curve[::-1]))
        return Calibration(replace(base, tau_binary=float(g[best])), float(curve[best]), mode)
    if mode != "three_class":
        raise BadConfig(f"unknown calibration mode {mode!r}")
    if len(g) < 2:
        raise BadConfig("three-class calibration needs at least two grid values")
    surface = three_class_f1_surface(pred, labels, g)
    flat = np.where(np.isnan(surface), -np.inf, surface).reshape(-1)
    best = int(np.argmax(flat))
    i, j = divmod(best, len(g))
    return Calibration(replace(base, tau_semi=float(g[i]), tau_opaque=float(g[j])), float(flat[best]), mode)


def calibrate_threshold(model, val, objective="macro_f1", grid=(0.0, 50.0, 0.25), mode="three_class",
                        base: ThresholdSet | None = None) -> Calibration:
    """Choose COT thresholds on labeled validation pixels (a WeakSet)."""
    if objective != "macro_f1":
        raise BadConfig(f"unsupported objective {objective!r}")
    if len(val) == 0:
        raise EmptyValidation("no validation pixels")
    return calibrate_from_predictions(model.predict(val.bands), val.labels, grid, mode, base)


def write_thresholds(path, cal: Calibration):
    t = cal.thresholds
    text = (
        f"tau_semi = {t.tau_semi!r}\n"
        f"tau_opaque = {t.tau_opaque!r}\n"
        f"tau_binary = {t.tau_binary!r}\n"
        f"mode = {cal.mode}\n"
        f"objective = {cal.objective!r}\n"
    )
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write thresholds {path}: {exc}") from exc


def read_thresholds(path) -> ThresholdSet:
    values = {}
    for line in Path(path).read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep and key.strip() in ("tau_semi", "tau_opaque", "tau_binary"):
            values[key.strip()] = float(value)
    return ThresholdSet(**values)
