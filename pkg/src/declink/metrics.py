"""Binary classification metrics: thresholded confusion scores and ROC-AUC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    roc_auc: float | None = None
    degenerate_precision: bool = False
    degenerate_recall: bool = False

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _check_binary(labels: np.ndarray, where: str) -> None:
    if labels.size == 0:
        raise MetricError(f"{where}: empty input")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError(f"{where}: labels must be binary")


def confusion_metrics(probs, labels, threshold: float = 0.5) -> EvalReport:
    """Score hard predictions prob >= threshold.

    A zero denominator makes precision or recall degenerate: reported as
    0.0 with the corresponding flag set, never NaN.
    """
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if probs.shape != labels.shape:
        raise MetricError("confusion_metrics: length mismatch")
    _check_binary(labels, "confusion_metrics")
    pred = probs >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    n = tp + fp + tn + fn

    degenerate_precision = (tp + fp) == 0
    degenerate_recall = (tp + fn) == 0
    precision = 0.0 if degenerate_precision else tp / (tp + fp)
    recall = 0.0 if degenerate_recall else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0.0 else 2 * precision * recall / (precision + recall)
    return EvalReport(
        accuracy=(tp + tn) / n,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn,
        degenerate_precision=degenerate_precision,
        degenerate_recall=degenerate_recall,
    )


def roc_auc(scores, labels) -> float:
    """Mann-Whitney ROC-AUC: the fraction of (positive, negative) pairs
    ranked correctly, ties worth half. Computed from average ranks, so it
    runs in O(n log n) and matches all-pairs counting exactly.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise MetricError("roc_auc: length mismatch")
    _check_binary(labels, "roc_auc")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc: both classes must be present")

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate(probs, labels, threshold: float = 0.5) -> EvalReport:
    """Confusion metrics plus ROC-AUC in one report."""
    report = confusion_metrics(probs, labels, threshold)
    report.roc_auc = roc_auc(probs, labels)
    return report
