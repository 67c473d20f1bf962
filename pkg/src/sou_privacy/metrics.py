"""Classification metrics: accuracy, ROC AUC and per-class precision/recall/F1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "ClassCounts",
    "ConfusionCounts",
    "MetricRow",
    "UndefinedAUCError",
    "confusion",
    "auc_roc",
    "metric_row",
    "aggregate_recording",
    "aggregate_by_recording",
]


class UndefinedAUCError(ValueError):
    """Raised when the ground truth holds a single class."""


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def support(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest counts for every label in ``labels``."""

    labels: tuple
    per_class: dict
    n: int

    def __getitem__(self, label) -> ClassCounts:
        return self.per_class[label]


def confusion(pred, truth, labels=None) -> ConfusionCounts:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"pred and truth must be 1-D of equal length, got {pred.shape} and {truth.shape}")
    if len(truth) == 0:
        raise ValueError("confusion of empty label lists")
    if labels is None:
        labels = tuple(np.unique(np.concatenate([truth, pred])).tolist())
    per_class = {}
    for c in labels:
        p, t = pred == c, truth == c
        per_class[c] = ClassCounts(
            tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)), tn=int(np.sum(~p & ~t)), fn=int(np.sum(~p & t))
        )
    return ConfusionCounts(tuple(labels), per_class, len(truth))


def auc_roc(scores, truth) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted one half.

    ``truth`` holds 1 for the positive class and 0 otherwise (booleans work too).
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have the same length")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined when the truth holds a single class")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricRow:
    acc: float  # percent
    auc: float | None
    macro_f1: float
    weighted_f1: float
    per_class: dict  # label -> {"precision", "recall", "f1"}
    positive_class: str
    n: int

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "auc": self.auc,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": {str(k): dict(v) for k, v in self.per_class.items()},
            "positive_class": self.positive_class,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRow":
        return cls(d["acc"], d["auc"], d["macro_f1"], d["weighted_f1"], d["per_class"], d["positive_class"], d["n"])


def metric_row(scores, pred, truth, positive_class, labels=None) -> MetricRow:
    """Accuracy (percent), AUC of ``scores`` for ``positive_class`` and per-class P/R/F1.

    ``labels`` fixes the class set and its order in ``per_class`` (default:
    sorted union of observed labels).  AUC is None when the truth holds one
    class only.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if labels is None:
        labels = tuple(np.unique(np.concatenate([truth, pred])).tolist())
    scores = np.asarray(scores, dtype=np.float64)
    if not (len(pred) == len(truth) == len(scores)):
        raise ValueError("scores, pred and truth must have equal lengths")
    counts = confusion(pred, truth, labels)
    per_class = {
        c: {"precision": counts[c].precision, "recall": counts[c].recall, "f1": counts[c].f1} for c in labels
    }
    f1s = np.array([counts[c].f1 for c in labels])
    support = np.array([counts[c].support for c in labels], dtype=np.float64)
    try:
        auc = auc_roc(scores, truth == positive_class)
    except UndefinedAUCError:
        auc = None
    return MetricRow(
        acc=100.0 * float(np.mean(pred == truth)),
        auc=auc,
        macro_f1=float(f1s.mean()),
        weighted_f1=float((f1s * support).sum() / support.sum()),
        per_class=per_class,
        positive_class=positive_class,
        n=len(truth),
    )


def aggregate_recording(chunk_probs) -> np.ndarray:
    """Mean class-probability vector over a recording's chunks."""
    probs = np.asarray(chunk_probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("need a non-empty (n_chunks, n_classes) array")
    if not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("chunk probability vectors must each sum to 1")
    return probs.mean(axis=0)


def aggregate_by_recording(recording_ids, probs, truth):
    """Group chunk rows by recording id (first-seen order).

    Returns ``(ids, mean_probs, truth)`` with one row per recording.
    """
    recording_ids = list(recording_ids)
    probs = np.asarray(probs)
    truth = np.asarray(truth)
    order: dict[str, list[int]] = {}
    for i, rid in enumerate(recording_ids):
        order.setdefault(rid, []).append(i)
    ids = list(order)
    mean = np.stack([aggregate_recording(probs[idx]) for idx in order.values()])
    labels = []
    for rid, idx in order.items():
        if len(set(truth[idx].tolist())) != 1:
            raise ValueError(f"recording {rid!r} has chunks with different labels")
        labels.append(truth[idx[0]])
    return ids, mean, np.asarray(labels)
