"""Trace-level detection and gate metrics.

The positive class is ``spoofed`` throughout. Ranking statistics take a
suspicion score (higher = more likely spoofed); for trust traces that is
``1 - min(T)`` over the scored fixes.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .gate import TraceOutcome
from .geo import Label, ValidationError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class ScoredTrace:
    label: Label
    min_t: float

    @property
    def detector_score(self) -> float:
        return 1.0 - self.min_t


@dataclass(frozen=True)
class GateMetrics:
    far: float
    fdr: float
    precision: float
    recall: float
    f1: float
    n_spoofed: int
    n_legitimate: int
    # False when a class is absent and the matching rate is reported as 0
    far_defined: bool = True
    fdr_defined: bool = True


def _is_spoofed(label) -> bool:
    return Label(label) is Label.SPOOFED


def confusion(scored: Sequence[ScoredTrace], threshold: float) -> Confusion:
    """Counts with a trace predicted spoofed iff its minimum trust is below ``threshold``."""
    if not scored:
        raise ValidationError("confusion needs at least one trace")
    tp = fp = tn = fn = 0
    for s in scored:
        pos = s.min_t < threshold
        if _is_spoofed(s.label):
            if pos:
                tp += 1
            else:
                fn += 1
        elif pos:
            fp += 1
        else:
            tn += 1
    return Confusion(tp, fp, tn, fn)


def precision_recall_f1(c: Confusion) -> tuple[float, float, float]:
    """Standard definitions; any 0/0 ratio is reported as 0."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray([_is_spoofed(l) if not isinstance(l, (bool, np.bool_)) else bool(l) for l in labels])
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError("scores and labels must be equal-length 1-D sequences")
    if y.all() or not y.any():
        raise ValidationError("metric needs both classes present")
    return s, y


def _operating_points(s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (tp, fp) as the threshold descends through distinct scores.

    Ties share one operating point. Returns (thresholds, tp, fp), highest
    threshold first.
    """
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted)), len(s_sorted) - 1]
    tp = np.cumsum(y_sorted)[last_of_group]
    fp = np.cumsum(~y_sorted)[last_of_group]
    return s_sorted[last_of_group], tp, fp


def auc_pr(scores: Sequence[float], labels: Sequence) -> float:
    """Area under the precision-recall curve with step interpolation.

    Sum over distinct thresholds of (recall gain) x (precision there), i.e.
    average precision; no trapezoids.
    """
    s, y = _check_binary(scores, labels)
    _, tp, fp = _operating_points(s, y)
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    gains = np.diff(np.r_[0.0, recall])
    return float(np.sum(gains * precision))


def eer(scores: Sequence[float], labels: Sequence) -> float:
    """Equal-error rate of the rule "spoofed iff score >= threshold".

    Operating points run from "nothing flagged" (FPR 0, FNR 1) to
    "everything flagged" (FPR 1, FNR 0). Where no point has FPR == FNR, the
    rate is read off the straight segment between the two neighbouring
    points that bracket the crossing.
    """
    s, y = _check_binary(scores, labels)
    _, tp, fp = _operating_points(s, y)
    fpr = np.r_[0.0, fp / (~y).sum()]
    fnr = np.r_[1.0, 1.0 - tp / y.sum()]
    diff = fpr - fnr  # non-decreasing, starts at -1 and ends at +1
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0:
        return float(fpr[k])
    # crossing inside the segment (k-1, k)
    a = -diff[k - 1] / (diff[k] - diff[k - 1])
    return float(fpr[k - 1] + a * (fpr[k] - fpr[k - 1]))


def far_fdr(outcomes: Sequence[TraceOutcome]) -> GateMetrics:
    """Final-disposition rates; a stepped-up trace counts by how it ended."""
    if not outcomes:
        raise ValidationError("far_fdr needs at least one outcome")
    n_sp = n_leg = acc_sp = den_leg = 0
    for o in outcomes:
        if _is_spoofed(o.label):
            n_sp += 1
            acc_sp += o.accepted
        else:
            n_leg += 1
            den_leg += not o.accepted
    far = acc_sp / n_sp if n_sp else 0.0
    fdr = den_leg / n_leg if n_leg else 0.0
    c = Confusion(tp=n_sp - acc_sp, fp=den_leg, tn=n_leg - den_leg, fn=acc_sp)
    p, r, f1 = precision_recall_f1(c)
    return GateMetrics(far, fdr, p, r, f1, n_sp, n_leg, n_sp > 0, n_leg > 0)
