"""Accuracy, FAR/FRR operating curves and k-fold aggregation."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, EmptyInputError, FoldError


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    far: float
    frr: float


@dataclass
class FoldResult:
    accuracies: list
    mean: float
    std: float

    def __str__(self):
        return f"{self.mean:.3f}±{self.std:.3f}"


def accuracy(predictions, truths):
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape:
        raise DimensionError(f"{predictions.shape} predictions vs {truths.shape} truths")
    if predictions.size == 0:
        raise EmptyInputError("accuracy of an empty set")
    return float(np.mean(predictions == truths))


def far_frr_curve(scores, labels):
    """Sweep every distinct score plus -inf/+inf; a trial is accepted iff score >= threshold.

    ``labels`` are truthy for positive (keyword) trials. Points are returned in
    increasing threshold order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(labels).astype(bool)
    if scores.shape != positive.shape:
        raise DimensionError(f"{scores.shape} scores vs {positive.shape} labels")
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError(f"need both classes, got {n_pos} positive / {n_neg} negative")
    pos_sorted = np.sort(scores[positive])
    neg_sorted = np.sort(scores[~positive])
    thresholds = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    # counts of scores strictly below each threshold = rejected trials
    rejected_pos = np.searchsorted(pos_sorted, thresholds, side="left")
    rejected_neg = np.searchsorted(neg_sorted, thresholds, side="left")
    far = (n_neg - rejected_neg) / n_neg
    frr = rejected_pos / n_pos
    return [OperatingPoint(float(t), float(a), float(r)) for t, a, r in zip(thresholds, far, frr)]


def far_at_fixed_frr(curve, target_frr):
    """Lowest FAR among points with FRR <= target; if none qualifies, the best FAR at minimal FRR."""
    eligible = [p for p in curve if p.frr <= target_frr]
    if not eligible:
        lowest = min(p.frr for p in curve)
        eligible = [p for p in curve if p.frr == lowest]
    return min(p.far for p in eligible)


def summarize_folds(accuracies):
    """Mean and population std of per-fold accuracies."""
    acc = [float(a) for a in accuracies]
    if not acc:
        raise EmptyInputError("no fold results")
    return FoldResult(acc, float(np.mean(acc)), float(np.std(acc)))


def kfold_cross_validate(x, y, folds, k, fit_predict):
    """Train on every fold but one, score the held-out fold, for each of ``k`` folds.

    ``fit_predict(train_x, train_y, test_x, fold)`` returns predicted class
    indices for ``test_x``.
    """
    folds = np.asarray(folds)
    y = np.asarray(y)
    if len(folds) != len(y):
        raise DimensionError(f"{len(folds)} fold ids for {len(y)} samples")
    if folds.size and (folds.min() < 0 or folds.max() >= k):
        raise FoldError(f"fold ids must lie in [0, {k})")
    accs = []
    for fold in range(k):
        test = folds == fold
        if not test.any():
            raise FoldError(f"fold {fold} is empty")
        if test.all():
            raise FoldError(f"fold {fold} leaves no training data")
        preds = fit_predict(x[~test], y[~test], x[test], fold)
        accs.append(accuracy(preds, y[test]))
    return summarize_folds(accs)


def write_curve(path, curve):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold\tfar\tfrr\n")
        for p in curve:
            fh.write(f"{p.threshold!r}\t{p.far!r}\t{p.frr!r}\n")


def write_metrics_table(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for name, value in rows:
            fh.write(f"{name}\t{value}\n")
