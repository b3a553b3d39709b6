"""Precision/recall/F1 at the optimal-F1 threshold, and ROC-AUC.

No point adjustment anywhere: scores are compared to labels point by point.
The F1 sweep is exact because F1 is piecewise constant between observed score
values, so only those values (plus -inf) need evaluating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    """Raised when a metric is undefined for the given labels."""


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    roc_auc: float | None = None

    def as_text(self) -> str:
        lines = [
            f"threshold = {self.threshold!r}",
            f"precision = {self.precision:.6f}",
            f"recall = {self.recall:.6f}",
            f"f1 = {self.f1:.6f}",
            f"tp = {self.tp}",
            f"fp = {self.fp}",
            f"tn = {self.tn}",
            f"fn = {self.fn}",
        ]
        if self.roc_auc is not None:
            lines.append(f"roc_auc = {self.roc_auc:.6f}")
        return "\n".join(lines)


def _validated(
    scores: np.ndarray, labels: np.ndarray, valid_mask: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if valid_mask is not None:
        m = np.asarray(valid_mask, dtype=bool)
        if m.shape != s.shape:
            raise MetricError(f"mask shape {m.shape} does not match scores {s.shape}")
        s, y = s[m], y[m]
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    y = y.astype(np.int8)
    if y.size == 0 or y.min() == y.max():
        raise MetricError("metrics undefined: need at least one positive and one negative label")
    return s, y


def _report_at(scores: np.ndarray, labels: np.ndarray, tau: float) -> EvalReport:
    pred = scores > tau
    tp = int(np.count_nonzero(pred & (labels == 1)))
    fp = int(np.count_nonzero(pred & (labels == 0)))
    fn = int(np.count_nonzero(~pred & (labels == 1)))
    tn = int(np.count_nonzero(~pred & (labels == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(
        precision=precision, recall=recall, f1=f1, threshold=tau, tp=tp, fp=fp, tn=tn, fn=fn
    )


def optimal_f1(
    scores: np.ndarray, labels: np.ndarray, valid_mask: np.ndarray | None = None
) -> EvalReport:
    """Best-F1 report over every candidate threshold.

    Candidates are the unique score values plus -inf, applied with the strict
    s > tau prediction rule.  Ties break toward higher precision, then lower
    threshold.
    """
    s, y = _validated(scores, labels, valid_mask)
    total_pos = int(np.count_nonzero(y))
    total = y.size

    # sweep thresholds descending: predictions accumulate one unique-score
    # group at a time, so TP/FP come from cumulative label counts
    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    cum_pos = np.cumsum(y[order])
    group_end = np.flatnonzero(np.diff(sorted_scores, append=-np.inf))  # last index of each group
    # threshold = value of the NEXT group (predict scores strictly greater)
    taus = np.concatenate([sorted_scores[group_end[1:]], [-np.inf]])
    tp = cum_pos[group_end].astype(np.float64)
    predicted = group_end + 1.0
    fp = predicted - tp
    fn = total_pos - tp
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / total_pos
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)

    # also consider predicting nothing (tau = max score)
    taus = np.concatenate([[sorted_scores[0]], taus])
    f1 = np.concatenate([[0.0], f1])
    precision = np.concatenate([[0.0], precision])

    best_f1 = f1.max()
    tied = np.flatnonzero(f1 >= best_f1)
    best_precision = precision[tied].max()
    tied = tied[precision[tied] >= best_precision]
    tau = float(taus[tied].min())
    report = _report_at(s, y, tau)
    assert total == report.tp + report.fp + report.tn + report.fn
    return report


def roc_auc(
    scores: np.ndarray, labels: np.ndarray, valid_mask: np.ndarray | None = None
) -> float:
    """Probability that a random positive outscores a random negative.

    Ties count one half; computed exactly from average ranks (the
    Mann-Whitney statistic), equivalent to trapezoidal ROC integration.
    """
    s, y = _validated(scores, labels, valid_mask)
    n_pos = int(np.count_nonzero(y))
    n_neg = y.size - n_pos
    ranks = rankdata(s, method="average")
    stat = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(stat / (n_pos * n_neg))


def evaluate(
    scores: np.ndarray, labels: np.ndarray, valid_mask: np.ndarray | None = None
) -> EvalReport:
    """Optimal-F1 report with ROC-AUC filled in."""
    report = optimal_f1(scores, labels, valid_mask)
    auc = roc_auc(scores, labels, valid_mask)
    return EvalReport(
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        threshold=report.threshold,
        tp=report.tp,
        fp=report.fp,
        tn=report.tn,
        fn=report.fn,
        roc_auc=auc,
    )
