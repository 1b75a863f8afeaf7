import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ateaug.data import assign_folds
from ateaug.errors import DegenerateInputError, EmptyInputError, FoldError
from ateaug.metrics import (OperatingPoint, accuracy, far_at_fixed_frr, far_frr_curve,
                            kfold_cross_validate, summarize_folds)

from oracles import confusion_at

SIX_SCORES = [0.9, 0.8, 0.4, 0.7, 0.3, 0.1]
SIX_LABELS = [1, 1, 1, 0, 0, 0]
# (threshold, far, frr) enumerated by hand
SIX_CURVE = [(-math.inf, 1, 0), (0.1, 1, 0), (0.3, 2 / 3, 0), (0.4, 1 / 3, 0),
             (0.7, 1 / 3, 1 / 3), (0.8, 0, 1 / 3), (0.9, 0, 2 / 3), (math.inf, 0, 1)]


def test_accuracy_cases():
    assert accuracy([0, 1, 1], [0, 1, 1]) == 1.0
    assert accuracy([1, 0, 0, 1], [0, 1, 1, 0]) == 0.0
    assert accuracy([1, 2, 3, 0], [1, 2, 3, 3]) == 0.75
    with pytest.raises(EmptyInputError):
        accuracy([], [])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
def test_accuracy_is_one_minus_error(pairs):
    p, t = zip(*pairs)
    errors = sum(a != b for a, b in pairs)
    assert accuracy(p, t) == pytest.approx(1 - errors / len(pairs))


def test_six_example_curve():
    curve = far_frr_curve(SIX_SCORES, SIX_LABELS)
    assert [(p.threshold, p.far, p.frr) for p in curve] == pytest.approx(SIX_CURVE)
    by_t = {p.threshold: p for p in curve}
    assert (by_t[0.8].far, by_t[0.8].frr) == (0.0, pytest.approx(1 / 3))
    assert (by_t[0.7].far, by_t[0.7].frr) == (pytest.approx(1 / 3), pytest.approx(1 / 3))


def test_sentinels_and_separation():
    curve = far_frr_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert (curve[0].far, curve[0].frr) == (1.0, 0.0)
    assert (curve[-1].far, curve[-1].frr) == (0.0, 1.0)
    assert any(p.far == 0 and p.frr == 0 for p in curve)
    assert far_at_fixed_frr(curve, 0.0) == 0.0


def test_single_class_rejected():
    with pytest.raises(DegenerateInputError):
        far_frr_curve([0.1, 0.2], [1, 1])


def test_far_at_fixed_frr_selection():
    curve = far_frr_curve(SIX_SCORES, SIX_LABELS)
    assert far_at_fixed_frr(curve, 1.0) == 0.0
    # FRR <= 1/3 admits threshold 0.8 (FAR 0, FRR 1/3)
    assert far_at_fixed_frr(curve, 1 / 3) == 0.0
    # below 1/3 only FRR 0 points qualify; best of those is threshold 0.4
    assert far_at_fixed_frr(curve, 0.2) == pytest.approx(1 / 3)


def test_far_at_fixed_frr_fallback():
    curve = [OperatingPoint(0.0, 0.5, 0.4), OperatingPoint(1.0, 0.2, 0.4),
             OperatingPoint(2.0, 0.0, 0.9)]
    assert far_at_fixed_frr(curve, 0.1) == 0.2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_curve_matches_brute_force_and_is_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 101))
    scores = np.round(rng.uniform(0, 1, n), int(rng.integers(1, 4)))
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    curve = far_frr_curve(scores, labels)
    for p in curve:
        assert (p.far, p.frr) == confusion_at(scores, labels, p.threshold)
    far = [p.far for p in curve]
    frr = [p.frr for p in curve]
    assert all(a >= b for a, b in zip(far, far[1:]))
    assert all(a <= b for a, b in zip(frr, frr[1:]))


def test_fold_assignment_esc50_shape():
    folds = assign_folds(2000, 5, seed=0)
    assert np.bincount(folds).tolist() == [400] * 5


def test_kfold_partition_and_constant_classifier():
    y = np.tile([0, 1], 50)
    folds = np.repeat(np.arange(5), 20)
    seen = []

    def constant(train_x, train_y, test_x, fold):
        seen.extend(test_x.tolist())
        return np.zeros(len(test_x), dtype=int)

    result = kfold_cross_validate(np.arange(100), y, folds, 5, constant)
    assert sorted(seen) == list(range(100))
    assert result.accuracies == [0.5] * 5
    assert result.std == 0.0
    assert str(result) == "0.500±0.000"


def test_fold_summary_matches_summation_oracle():
    accs = [0.61, 0.55, 0.58, 0.57, 0.6]
    r = summarize_folds(accs)
    mean = sum(accs) / len(accs)
    std = math.sqrt(sum((a - mean) ** 2 for a in accs) / len(accs))
    assert abs(r.mean - mean) < 1e-12 and abs(r.std - std) < 1e-12


def test_kfold_errors():
    fp = lambda train_x, train_y, test_x, fold: np.zeros(len(test_x))
    with pytest.raises(FoldError):
        kfold_cross_validate(np.zeros(4), np.zeros(4), [0, 0, 2, 2], 3, fp)
    with pytest.raises(FoldError):
        kfold_cross_validate(np.zeros(4), np.zeros(4), [0, 1, 5, 1], 3, fp)
