"""Confusion matrices, accuracy / precision / recall / F1, ROC and AUC.

Per-class precision, recall and F1 use the one-vs-rest reduction of the
confusion matrix. A ratio whose denominator is zero is reported as 0 and the
``(class, metric)`` pair is listed in ``MetricsReport.undefined``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .labels import LabelSpace


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray = field(compare=False)  # rows = actual, columns = predicted
    label_space: LabelSpace

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (len(self.label_space),) * 2 or (c < 0).any():
            raise InputError(f"confusion counts must be a non-negative {len(self.label_space)}-square matrix")
        object.__setattr__(self, "counts", c)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and self.label_space == other.label_space and np.array_equal(
            self.counts, other.counts
        )

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, code) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) with ``code`` as the positive class."""
        i = self.label_space.index(code)
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum()) - tp
        fn = int(self.counts[i, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn

    def to_dict(self) -> dict:
        return {"labels": list(self.label_space.codes), "counts": self.counts.tolist()}

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["actual\\predicted", *self.label_space.codes])
            for code, row in zip(self.label_space.codes, self.counts):
                w.writerow([code, *row.tolist()])


def confusion(predictions: Sequence, actuals: Sequence, label_space: LabelSpace) -> ConfusionMatrix:
    if len(predictions) != len(actuals):
        raise InputError(f"{len(predictions)} predictions but {len(actuals)} actuals")
    if not predictions:
        raise InputError("cannot build a confusion matrix from empty lists")
    counts = np.zeros((len(label_space),) * 2, dtype=np.int64)
    for p, a in zip(predictions, actuals):
        try:
            counts[label_space.index(a), label_space.index(p)] += 1
        except Exception as exc:
            raise InputError(f"label outside {label_space.codes}: {exc}") from None
    return ConfusionMatrix(counts, label_space)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class: dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    undefined: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {
                c: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for c, m in self.per_class.items()
            },
            "undefined": [list(u) for u in self.undefined],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            d["accuracy"],
            {c: ClassMetrics(m["precision"], m["recall"], m["f1"], m["support"]) for c, m in d["per_class"].items()},
            d["macro_precision"],
            d["macro_recall"],
            d["macro_f1"],
            tuple(tuple(u) for u in d.get("undefined", [])),
        )


def _ratio(num: float, den: float, tag: tuple[str, str], undefined: list) -> float:
    if den == 0:
        undefined.append(tag)
        return 0.0
    return num / den


def report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total < 1:
        raise InputError("confusion matrix is empty")
    undefined: list[tuple[str, str]] = []
    per_class = {}
    for code in cm.label_space.codes:
        tp, fp, fn, _ = cm.one_vs_rest(code)
        p = _ratio(tp, tp + fp, (code, "precision"), undefined)
        r = _ratio(tp, tp + fn, (code, "recall"), undefined)
        f1 = _ratio(2 * p * r, p + r, (code, "f1"), undefined)
        per_class[code] = ClassMetrics(p, r, f1, tp + fn)
    vals = list(per_class.values())
    return MetricsReport(
        accuracy=float(np.trace(cm.counts)) / cm.total,
        per_class=per_class,
        macro_precision=sum(m.precision for m in vals) / len(vals),
        macro_recall=sum(m.recall for m in vals) / len(vals),
        macro_f1=sum(m.f1 for m in vals) / len(vals),
        undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class ROCCurve:
    fpr: np.ndarray = field(compare=False)
    tpr: np.ndarray = field(compare=False)
    thresholds: np.ndarray = field(compare=False)
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            # first threshold is +inf (nothing predicted positive)
            "thresholds": [None if not np.isfinite(t) else float(t) for t in self.thresholds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ROCCurve":
        th = [np.inf if t is None else t for t in d["thresholds"]]
        return cls(np.asarray(d["fpr"], float), np.asarray(d["tpr"], float), np.asarray(th, float), d["auc"])


def roc_auc(scores: Sequence[float], actuals: Sequence) -> ROCCurve:
    """ROC over every distinct score threshold; AUC by the trapezoid rule.

    ``actuals`` are booleans / 0-1 ints (1 = positive). Tied scores form one
    threshold step, so the trapezoid across a tie block counts each tied
    positive-negative pair as one half, matching the Mann-Whitney statistic.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(actuals).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise InputError("scores and actuals must be equal-length 1-D sequences")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise InputError("ROC needs at least one positive and one negative example")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return ROCCurve(fpr, tpr, np.r_[np.inf, s[ends]], auc)


def write_report_csv(rows: list[dict], path: str | Path) -> None:
    """Metric rows as CSV in percent: F1 to two decimals, other ratios to one."""
    if not rows:
        return
    keys = list(rows[0])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_display_round(k, r[k]) for k in keys])


def _display_round(key: str, v):
    if isinstance(v, float):
        return f"{100 * v:.2f}" if "f1" in key else f"{100 * v:.1f}"
    return v
