"""Model evaluation: ROC-AUC by rank statistics, accuracy, calibration.

Accuracy is reported next to AUC deliberately: with a 20% no-show rate a
constant always-attends prediction already scores 0.80, so accuracy alone
says nothing about ranking quality. AUC here equals the pairwise
concordance probability P(score_pos > score_neg) + half credit for ties,
computed from tie-averaged ranks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SingleClass(ValueError):
    pass


def _check_two_classes(labels: np.ndarray) -> tuple[int, int]:
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need at least one positive and one negative label")
    return n_pos, n_neg


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Concordance AUC from tie-averaged ranks.

    Average ranks of tie groups are half-integers, so the rank sum is
    exact in floating point and the result matches a brute-force pairwise
    count bit for bit.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = _check_two_classes(y)

    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    boundaries = np.nonzero(np.diff(ss))[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [s.size]))
    group_rank = (starts + ends + 1) / 2.0  # average of 1-based ranks in the tie group
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)

    rank_sum_pos = float(ranks[y == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def accuracy(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    return float(((s >= threshold).astype(int) == y).mean())


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float]]:
    """ROC curve vertices from (0,0) to (1,1); both coordinates nondecreasing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos, n_neg = _check_two_classes(y)
    order = np.argsort(-s, kind="mergesort")
    ys = y[order]
    ss = s[order]
    cut = np.nonzero(np.diff(ss))[0]
    ends = np.concatenate((cut, [s.size - 1]))  # last index of each distinct-score group
    tp = np.cumsum(ys)[ends]
    fp = (ends + 1) - tp
    points = [(0.0, 0.0)]
    points.extend((float(f) / n_neg, float(t) / n_pos) for f, t in zip(fp, tp))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    count: int
    mean_predicted: float | None
    observed_rate: float | None


def calibration_table(
    probs: Sequence[float], labels: Sequence[int], n_bins: int = 10
) -> list[CalibrationBin]:
    """Equal-width bins on [0, 1]; empty bins are reported with count 0."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    which = np.minimum((p * n_bins).astype(int), n_bins - 1)
    bins = []
    for b in range(n_bins):
        mask = which == b
        count = int(mask.sum())
        bins.append(
            CalibrationBin(
                lo=b / n_bins,
                hi=(b + 1) / n_bins,
                count=count,
                mean_predicted=float(p[mask].mean()) if count else None,
                observed_rate=float(y[mask].mean()) if count else None,
            )
        )
    return bins


@dataclass
class EvaluationReport:
    roc_auc: float
    accuracy: float
    base_rate: float
    n: int
    calibration: list[CalibrationBin]
    roc_points: list[tuple[float, float]]

    def to_json(self) -> str:
        doc = {
            "roc_auc": self.roc_auc,
            "accuracy_at_0.5": self.accuracy,
            "base_rate": self.base_rate,
            "n": self.n,
            "calibration": [
                {
                    "lo": b.lo,
                    "hi": b.hi,
                    "count": b.count,
                    "mean_predicted": b.mean_predicted,
                    "observed_rate": b.observed_rate,
                }
                for b in self.calibration
            ],
            "roc_points": [[f, t] for f, t in self.roc_points],
        }
        return json.dumps(doc, indent=2)

    def to_text(self) -> str:
        lines = [
            f"n = {self.n}, base rate = {self.base_rate:.4f}",
            f"ROC-AUC = {self.roc_auc:.4f}",
            f"accuracy at 0.5 = {self.accuracy:.4f}",
            "calibration (bin, count, mean predicted, observed):",
        ]
        for b in self.calibration:
            if b.count == 0:
                lines.append(f"  [{b.lo:.1f}, {b.hi:.1f})  empty")
            else:
                lines.append(
                    f"  [{b.lo:.1f}, {b.hi:.1f})  {b.count:>7}  {b.mean_predicted:.4f}  {b.observed_rate:.4f}"
                )
        return "\n".join(lines)


def evaluate(scores: Sequence[float], labels: Sequence[int], n_bins: int = 10) -> EvaluationReport:
    y = np.asarray(labels)
    return EvaluationReport(
        roc_auc=roc_auc(scores, labels),
        accuracy=accuracy(scores, labels),
        base_rate=float(np.asarray(y, dtype=np.float64).mean()),
        n=int(y.size),
        calibration=calibration_table(scores, labels, n_bins),
        roc_points=roc_points(scores, labels),
    )
