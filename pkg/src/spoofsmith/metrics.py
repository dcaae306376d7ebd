"""Binary-classification metrics: confusion counts, ROC sweep, AUC, and
report files.

Conventions: bona fide is the positive class, score >= threshold predicts
positive, and a rate with a zero denominator is reported as None rather
than 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, EmptyInputError, InvalidArgumentError

POSITIVE_LABEL = "bona_fide"


@dataclass
class ScoredSet:
    """Scores in [0,1] paired with a boolean positive mask."""
    scores: np.ndarray
    positive: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.positive = np.asarray(self.positive, dtype=bool)
        if self.scores.shape != self.positive.shape or self.scores.ndim != 1:
            raise InvalidArgumentError("scores and labels must be equal-length 1-D")
        if not np.all(np.isfinite(self.scores)):
            raise InvalidArgumentError("scores must be finite")

    @classmethod
    def from_pairs(cls, pairs) -> "ScoredSet":
        scores = [s for s, _ in pairs]
        pos = [lbl == POSITIVE_LABEL for _, lbl in pairs]
        return cls(np.asarray(scores), np.asarray(pos))

    def __len__(self):
        return len(self.scores)


@dataclass
class EvalReport:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    tpr: Optional[float]
    fpr: Optional[float]
    roc: list = field(default_factory=list)       # [(fpr, tpr), ...]
    auc: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp,
                          "tn": self.tn, "fn": self.fn},
            "accuracy": self.accuracy,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "roc": [[f, t] for f, t in self.roc],
            "auc": self.auc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        c = d["confusion"]
        return cls(threshold=d["threshold"], tp=c["tp"], fp=c["fp"],
                   tn=c["tn"], fn=c["fn"], accuracy=d["accuracy"],
                   tpr=d["tpr"], fpr=d["fpr"],
                   roc=[(f, t) for f, t in d["roc"]], auc=d["auc"])


def confusion(sset: ScoredSet, threshold: float = 0.5) -> EvalReport:
    """Exact counts and rates at one threshold (ROC/AUC fields left empty)."""
    if len(sset) == 0:
        raise EmptyInputError("cannot compute a confusion matrix of an empty set")
    pred = sset.scores >= threshold
    pos = sset.positive
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    tn = int(np.count_nonzero(~pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    n_pos, n_neg = tp + fn, fp + tn
    return EvalReport(
        threshold=float(threshold), tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=(tp + tn) / len(sset),
        tpr=tp / n_pos if n_pos else None,
        fpr=fp / n_neg if n_neg else None)


def roc_curve(sset: ScoredSet) -> list:
    """(fpr, tpr) points from a descending sweep over the distinct scores,
    with the (0,0) sentinel prepended; ties share one threshold."""
    pos = sset.positive
    n_pos = int(np.count_nonzero(pos))
    n_neg = len(sset) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("ROC needs both classes present")
    order = np.argsort(-sset.scores, kind="stable")
    scores = sset.scores[order]
    pos_sorted = pos[order]

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(np.count_nonzero(pos_sorted[i:j]))
        fp += (j - i) - int(np.count_nonzero(pos_sorted[i:j]))
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return points


def auc(points) -> float:
    """Trapezoidal integral of the ROC curve over fpr."""
    if len(points) < 2:
        raise InvalidArgumentError("AUC needs at least 2 ROC points")
    fprs = np.asarray([p[0] for p in points])
    tprs = np.asarray([p[1] for p in points])
    return float(np.trapezoid(tprs, fprs))


def evaluate_scores(sset: ScoredSet, threshold: float = 0.5) -> EvalReport:
    """Full report: confusion at the threshold plus the ROC sweep and AUC."""
    report = confusion(sset, threshold)
    report.roc = roc_curve(sset)
    report.auc = auc(report.roc)
    return report


def emit_report(report: EvalReport, out_dir) -> None:
    """Write report.json and roc.csv (header `fpr,tpr`, full precision)."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8",
              newline="\n") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    with open(os.path.join(out_dir, "roc.csv"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write("fpr,tpr\n")
        for fpr, tpr in report.roc:
            f.write(f"{fpr!r},{tpr!r}\n")


def load_report(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as f:
        return EvalReport.from_dict(json.load(f))
