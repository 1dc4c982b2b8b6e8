"""Precision-recall curve, AUPRC (average precision) and thresholded P/R/F1.

Anomalies are the positive class; larger scores mean more anomalous.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .tensor import ContractError


@dataclass(frozen=True)
class PRCurve:
    """One point per distinct score, thresholds descending.

    A sample is flagged when its score is >= the threshold, so recall is
    non-decreasing along the arrays and reaches 1 at the last point. The
    recall-0 start sits implicitly above the highest score.
    """

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ContractError(f"{s.size} scores vs {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0/1")
    if not np.any(y == 1):
        raise ContractError("no positive (anomalous) labels")
    if not np.any(y == 0):
        raise ContractError("no negative (normal) labels")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores contain NaN or Inf")
    return s, y.astype(np.int64)


def pr_curve(scores, labels) -> PRCurve:
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores: ties flip together
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp, fp = tp[last], fp[last]
    return PRCurve(thresholds=s[last], precision=tp / (tp + fp), recall=tp / y.sum())


def auprc(curve: PRCurve) -> float:
    """Average precision: sum of (r_k - r_{k-1}) * p_k, r_0 = 0."""
    dr = np.diff(np.r_[0.0, curve.recall])
    # fsum is correctly rounded, so the result does not depend on summation order
    return math.fsum(dr * curve.precision)


def average_precision(scores, labels) -> float:
    return auprc(pr_curve(scores, labels))


def prf_at_threshold(scores, labels, threshold: float | None = None,
                     base_rate: float | None = None) -> tuple[float, float, float]:
    """Precision, recall and F1 with samples flagged at score >= threshold.

    Without an explicit threshold, it is the (1 - base_rate) quantile of the
    scores; ``base_rate`` defaults to the positive rate of ``labels``.
    """
    s, y = _check(scores, labels)
    if threshold is None:
        rate = y.mean() if base_rate is None else base_rate
        threshold = float(np.quantile(s, 1.0 - rate))
    flagged = s >= threshold
    tp = int(np.sum(flagged & (y == 1)))
    fp = int(np.sum(flagged & (y == 0)))
    fn = int(np.sum(~flagged & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def scale_scores(scores) -> np.ndarray:
    """Min-max scale scores into [0, 1]; a constant list maps to zeros."""
    s = np.asarray(scores, dtype=np.float64)
    lo, hi = s.min(), s.max()
    if hi == lo:
        warnings.warn("constant anomaly scores; scaled scores set to 0", RuntimeWarning,
                      stacklevel=2)
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)
