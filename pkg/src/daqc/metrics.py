"""Classification metrics.

Binary problems treat class 1 as positive.  With more than two classes,
AUC, specificity, sensitivity and F1 are macro averages of the
one-vs-rest binary values.  Ratios with an empty denominator count as 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, LabelError, ShapeError


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    acc: float
    specificity: float
    sensitivity: float
    f1: float

    def to_json(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def roc_auc_binary(scores, positive) -> float:
    """Probability that a random positive outranks a random negative (ties
    count one half), computed from average ranks."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined when only one class is present")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(probs, labels, n_classes: int | None = None) -> float:
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = _check_labels(labels, probs.shape[1] if n_classes is None else n_classes)
    if probs.shape[1] == 2:
        return roc_auc_binary(probs[:, 1], labels == 1)
    return float(np.mean([roc_auc_binary(probs[:, c], labels == c)
                          for c in range(probs.shape[1])]))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """``cm[i, j]`` counts samples of class ``i`` predicted as ``j``."""
    y_true = _check_labels(y_true, n_classes)
    y_pred = _check_labels(y_pred, n_classes)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _ratio(num, den) -> float:
    return float(num / den) if den else 0.0


def _one_vs_rest(cm: np.ndarray, c: int):
    tp = cm[c, c]
    fn = cm[c].sum() - tp
    fp = cm[:, c].sum() - tp
    tn = cm.sum() - tp - fn - fp
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    f1 = _ratio(2 * tp, 2 * tp + fp + fn)
    return sens, spec, f1


def classification_report(probs, labels) -> MetricsReport:
    """Metrics from class scores ``probs`` (``(n, C)``) and true labels."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    n_classes = probs.shape[1]
    labels = _check_labels(labels, n_classes)
    if labels.size != probs.shape[0]:
        raise ShapeError(f"{probs.shape[0]} score rows for {labels.size} labels")
    if labels.size == 0:
        raise DataError("cannot evaluate an empty split")
    pred = np.argmax(probs, axis=1)
    cm = confusion_matrix(labels, pred, n_classes)
    acc = float(np.trace(cm) / cm.sum())
    auc = roc_auc(probs, labels)
    if n_classes == 2:
        sens, spec, f1 = _one_vs_rest(cm, 1)
    else:
        sens, spec, f1 = np.mean([_one_vs_rest(cm, c) for c in range(n_classes)], axis=0)
    return MetricsReport(auc=auc, acc=acc, specificity=float(spec),
                         sensitivity=float(sens), f1=float(f1))


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.int64, copy=False)
