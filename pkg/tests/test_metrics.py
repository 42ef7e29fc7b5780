import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cotmask.errors import EmptyMatrix, EmptyValidation, LabelOutOfRange, LengthMismatch
from cotmask.metrics import (
    ConfusionMatrix,
    accumulate_confusion,
    binary_f1_curve,
    calibrate_from_predictions,
    evaluate_regression,
    mae,
    per_class_scores,
    read_thresholds,
    three_class_f1_surface,
    threshold_grid,
    write_thresholds,
)
from cotmask.surrogate_rt import FAMILIES
from cotmask.weak_finetune import ThresholdSet


def test_mae_values():
    y = np.arange(10.0)
    assert mae(y, y) == 0.0
    assert mae(y + 2, y) == 2.0
    rng = np.random.default_rng(0)
    p, t = rng.normal(size=100), rng.normal(size=100)
    total = 0.0
    for a, b in zip(p.tolist(), t.tolist()):
        total += abs(a - b)
    assert mae(p, t) == pytest.approx(total / 100, abs=1e-12)
    with pytest.raises(LengthMismatch):
        mae([1.0], [1.0, 2.0])
    with pytest.raises(EmptyValidation):
        mae([], [])


def brute_confusion(pred, gt, k):
    c = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(pred.ravel(), gt.ravel()):
        c[g, p] += 1
    return c


def test_confusion_matches_loops():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, gt = rng.integers(0, 3, (10, 10)), rng.integers(0, 3, (10, 10))
        np.testing.assert_array_equal(accumulate_confusion(pred, gt, 3).counts, brute_confusion(pred, gt, 3))
    m = rng.integers(0, 3, (5, 5))
    c = accumulate_confusion(m, m, 3).counts
    assert np.all(c == np.diag(np.diag(c)))


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        accumulate_confusion(np.array([3]), np.array([0]), 3)


def test_perfect_and_swapped_scores():
    m = np.array([[0, 1], [2, 1]])
    s = per_class_scores(accumulate_confusion(m, m, 3))
    assert s.macro_f1 == 1.0 and s.miou == 1.0 and s.micro_f1 == 1.0
    gt = np.array([0, 1, 1, 0])
    s = per_class_scores(accumulate_confusion(1 - gt, gt, 2))
    assert s.f1.tolist() == [0.0, 0.0]


def test_iou_one_third():
    gt = np.array([[1, 1], [1, 1], [0, 0]])
    pred = np.array([[0, 0], [1, 1], [1, 1]])
    s = per_class_scores(accumulate_confusion(pred, gt, 2))
    assert s.iou[1] == pytest.approx(1 / 3, abs=1e-15)


def test_empty_matrix():
    with pytest.raises(EmptyMatrix):
        per_class_scores(ConfusionMatrix(np.zeros((3, 3), dtype=int)))


def test_absent_class_scores_zero():
    s = per_class_scores(accumulate_confusion(np.zeros(4, int), np.zeros(4, int), 3))
    assert s.f1.tolist() == [1.0, 0.0, 0.0]


class Oracle:
    def __init__(self, test, nz):
        self.lookup = {row.tobytes(): c for row, c in zip(test.bands, test.cot)}
        self.normalizer = nz

    def predict(self, x):
        return np.array([self.lookup.get(r.tobytes(), 0.0) for r in np.asarray(x)])


def test_regression_table(small_dataset):
    from cotmask.features import fit_normalizer

    oracle = Oracle(small_dataset, fit_normalizer(small_dataset))
    t = evaluate_regression(oracle, small_dataset, [0.0], per_family=True)
    assert t.maes == [0.0] and t.average == 0.0
    full = evaluate_regression(oracle, small_dataset, per_family=True, seed=3)
    labels = [r[0] for r in full.rows()]
    assert labels[:7] == ["Test-0%", "Test-1%", "Test-2%", "Test-3%", "Test-4%", "Test-5%", "Average"]
    assert labels[7:] == [f"Family-{f}" for f in FAMILIES]
    again = evaluate_regression(oracle, small_dataset, per_family=True, seed=3)
    assert again.rows() == full.rows()


def test_threshold_grid():
    g = threshold_grid(0, 50, 0.25)
    assert g[0] == 0.25 and g[-1] == 50.0 and len(g) == 200


def brute_three_class(pred, labels, a, b):
    cls = np.where(pred >= b, 2, np.where(pred >= a, 1, 0))
    return per_class_scores(accumulate_confusion(cls, labels, 3)).macro_f1


@given(arrays(np.float64, 30, elements=st.floats(0, 3)), arrays(np.int64, 30, elements=st.integers(0, 2)))
def test_f1_surface_matches_direct_scoring(pred, labels):
    grid = threshold_grid(0, 3, 0.5)
    surface = three_class_f1_surface(pred, labels, grid)
    for i, a in enumerate(grid):
        for j, b in enumerate(grid):
            if a < b:
                assert surface[i, j] == pytest.approx(brute_three_class(pred, labels, a, b), abs=1e-12)
            else:
                assert np.isnan(surface[i, j])
    curve = binary_f1_curve(pred, labels != 0, grid)
    for j, t in enumerate(grid):
        direct = per_class_scores(accumulate_confusion((pred >= t).astype(int), (labels != 0).astype(int), 2))
        assert curve[j] == pytest.approx(direct.macro_f1, abs=1e-12)


def test_separable_calibration():
    rng = np.random.default_rng(0)
    pred = np.concatenate([rng.uniform(0, 0.2, 50), rng.uniform(0.9, 1.1, 50), rng.uniform(2, 10, 50)])
    labels = np.repeat([0, 1, 2], 50)
    cal = calibrate_from_predictions(pred, labels)
    assert cal.objective == 1.0
    assert (cal.thresholds.tau_semi, cal.thresholds.tau_opaque) == (0.25, 1.25)
    assert brute_three_class(pred, labels, cal.thresholds.tau_semi, cal.thresholds.tau_opaque) == 1.0


def test_binary_all_clear_prefers_largest_threshold():
    cal = calibrate_from_predictions(np.linspace(0, 3, 40), np.zeros(40, int), mode="binary")
    assert cal.thresholds.tau_binary == 50.0 and cal.objective == 0.5


def test_thresholds_file_round_trip(tmp_path):
    cal = calibrate_from_predictions(np.array([0.1, 1.0, 5.0]), np.array([0, 1, 2]))
    write_thresholds(tmp_path / "t.txt", cal)
    assert read_thresholds(tmp_path / "t.txt") == cal.thresholds
    assert isinstance(cal.thresholds, ThresholdSet)


def spearman(a, b):
    ra, rb = np.argsort(np.argsort(a)), np.argsort(np.argsort(b))
    return float(np.corrcoef(ra, rb)[0, 1])


@pytest.mark.slow
def test_noise_free_model_degrades_with_noise(clean_model, desk_split):
    test = desk_split[2]
    for seed in range(3):
        table = evaluate_regression(clean_model[0], test, seed=seed)
        assert spearman(table.noise_levels, table.maes) > 0
