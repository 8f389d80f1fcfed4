"""Confusion matrices, per-class diagnostic rates, ROC curves and AUC.

A rate whose denominator is zero is *undefined* and is represented by
``None`` (``null`` in JSON), never by NaN or a silent 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from busnet.labels import NUM_CLASSES, class_names

METRIC_NAMES = ("sensitivity", "specificity", "precision", "f1", "fpr", "npv", "accuracy")
REPORT_RATES = ("sensitivity", "specificity", "precision", "f1", "fpr", "npv", "auc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...] = tuple(class_names())

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ValueError(f"confusion matrix must be KxK with K >= 2, got shape {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion counts must be nonnegative")
        if len(self.class_names) != c.shape[0]:
            raise ValueError("class_names length does not match matrix size")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> Optional[float]:
        return _ratio(int(np.trace(self.counts)), self.total)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.class_names)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.class_names])
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name, *map(int, row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        names = tuple(rows[0][1:])
        return cls(np.array([[int(v) for v in r[1:]] for r in rows[1:]]), names)


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(num, den) -> Optional[float]:
    return None if den == 0 else num / den


def accumulate(pairs: Iterable[tuple[int, int]], num_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    """Tally (true, predicted) pairs."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    pairs = list(pairs)
    if pairs:
        arr = np.asarray([(int(t), int(p)) for t, p in pairs], dtype=np.intp)
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"labels must lie in [0, {num_classes}), got range [{arr.min()}, {arr.max()}]")
        np.add.at(counts, (arr[:, 0], arr[:, 1]), 1)
    names = tuple(class_names()) if num_classes == NUM_CLASSES else tuple(str(i) for i in range(num_classes))
    return ConfusionMatrix(counts, names)


def one_vs_rest(cm: ConfusionMatrix, positive: int) -> BinaryCounts:
    p = int(positive)
    if not 0 <= p < cm.counts.shape[0]:
        raise ValueError(f"class {positive} not in a {cm.counts.shape[0]}-class matrix")
    c = cm.counts
    tp = int(c[p, p])
    fn = int(c[p, :].sum()) - tp
    fp = int(c[:, p].sum()) - tp
    tn = cm.total - tp - fn - fp
    return BinaryCounts(tp, fp, tn, fn)


def scalar_metrics(c: BinaryCounts) -> dict[str, Optional[float]]:
    precision = _ratio(c.tp, c.tp + c.fp)
    sensitivity = _ratio(c.tp, c.tp + c.fn)
    if precision is None or sensitivity is None or precision + sensitivity == 0:
        f1 = None
    else:
        f1 = 2 * precision * sensitivity / (precision + sensitivity)
    return {
        "accuracy": _ratio(c.tp + c.tn, c.total),
        "precision": precision,
        "specificity": _ratio(c.tn, c.tn + c.fp),
        "sensitivity": sensitivity,
        "f1": f1,
        "fpr": _ratio(c.fp, c.fp + c.tn),
        "npv": _ratio(c.tn, c.tn + c.fn),
    }


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
            w.writerow([repr(float(t)) if math.isfinite(t) else "inf", repr(float(f)), repr(float(p))])
        return buf.getvalue()


def roc(scores: Sequence[tuple[float, bool]]) -> RocCurve:
    """ROC by sweeping every distinct score as a threshold (predict positive when score >= t).

    The sweep starts at +inf, which yields the (0, 0) point; tied scores move
    as one step so the curve takes a diagonal segment across them. AUC is the
    trapezoidal area under the resulting polyline.
    """
    s = np.asarray([float(v) for v, _ in scores], dtype=np.float64)
    y = np.asarray([bool(b) for _, b in scores], dtype=bool)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC undefined: need at least one positive and one negative sample")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # keep the last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    # trapezoids in integer counts, one division at the end: exact 1.0 for perfect separation
    tp_pts = np.r_[0, tp[last]].astype(np.int64)
    fp_pts = np.r_[0, fp[last]].astype(np.int64)
    twice_area = int(np.sum(np.diff(fp_pts) * (tp_pts[1:] + tp_pts[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return RocCurve(thresholds, fpr, tpr, auc)


def _mean_defined(values: Iterable[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class MetricsReport:
    """Per-class one-vs-rest rates, their macro and micro averages, and overall accuracy.

    ``micro`` pools the one-vs-rest counts of every class before dividing;
    micro AUC is not computed.
    """

    per_class: dict[str, dict[str, Optional[float]]]
    macro: dict[str, Optional[float]]
    micro: dict[str, Optional[float]]
    accuracy: Optional[float]
    confusion: ConfusionMatrix
    n_samples: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "per_class": self.per_class,
            "macro": self.macro,
            "micro": self.micro,
            "confusion": {
                "class_names": list(self.confusion.class_names),
                "counts": self.confusion.counts.tolist(),
            },
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        cm = ConfusionMatrix(np.array(d["confusion"]["counts"]), tuple(d["confusion"]["class_names"]))
        return cls(d["per_class"], d["macro"], d["micro"], d["accuracy"], cm, d.get("n_samples", cm.total), d.get("extra", {}))


def report(cm: ConfusionMatrix, per_sample_probs: Sequence[tuple[str, Sequence[float], int]]) -> MetricsReport:
    """Full report from a confusion matrix and the per-sample class probabilities behind it.

    Each per-class AUC uses that class's probability as the one-vs-rest score;
    it is undefined when the class is absent or is the only class present.
    """
    k = cm.counts.shape[0]
    if len(per_sample_probs) != cm.total:
        raise ValueError(f"{len(per_sample_probs)} probability rows but the confusion matrix holds {cm.total} samples")
    probs = np.asarray([np.asarray(p, dtype=np.float64) for _, p, _ in per_sample_probs]).reshape(-1, k) if per_sample_probs else np.zeros((0, k))
    truth = np.asarray([int(t) for _, _, t in per_sample_probs], dtype=np.intp)
    row_totals = np.bincount(truth, minlength=k) if truth.size else np.zeros(k, dtype=np.int64)
    if not np.array_equal(row_totals, cm.counts.sum(axis=1)):
        raise ValueError(f"true-label counts {row_totals.tolist()} disagree with confusion rows {cm.counts.sum(axis=1).tolist()}")

    per_class = {}
    pooled = [0, 0, 0, 0]
    for c in range(k):
        bc = one_vs_rest(cm, c)
        pooled = [a + b for a, b in zip(pooled, (bc.tp, bc.fp, bc.tn, bc.fn))]
        m = scalar_metrics(bc)
        is_pos = truth == c
        if is_pos.any() and (~is_pos).any():
            m["auc"] = roc(list(zip(probs[:, c], is_pos))).auc
        else:
            m["auc"] = None
        per_class[cm.class_names[c]] = m
    macro = {name: _mean_defined(per_class[c][name] for c in per_class) for name in REPORT_RATES}
    micro = scalar_metrics(BinaryCounts(*pooled))
    micro.pop("accuracy")
    micro["auc"] = None
    return MetricsReport(per_class, macro, micro, cm.accuracy, cm, cm.total)


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Fold-averaged report: every scalar is the mean over folds, the confusion matrix is pooled.

    ``accuracy`` here is the mean fold accuracy, so it can differ slightly
    from trace/total of the pooled matrix when folds are unequal in size.
    """
    if not reports:
        raise ValueError("no reports to average")
    cm = reports[0].confusion
    for r in reports[1:]:
        cm = cm + r.confusion
    per_class = {
        c: {name: _mean_defined(r.per_class[c].get(name) for r in reports) for name in REPORT_RATES}
        for c in reports[0].per_class
    }
    macro = {name: _mean_defined(r.macro.get(name) for r in reports) for name in REPORT_RATES}
    micro = {name: _mean_defined(r.micro.get(name) for r in reports) for name in REPORT_RATES}
    acc = _mean_defined(r.accuracy for r in reports)
    return MetricsReport(
        per_class, macro, micro, acc, cm, cm.total,
        extra={"folds": len(reports), "fold_accuracy": [r.accuracy for r in reports]},
    )


def labels_report(truth: Sequence[int], probs: np.ndarray, sample_ids: Optional[Sequence[str]] = None,
                  predicted: Optional[Sequence[int]] = None) -> MetricsReport:
    """Convenience wrapper: build the confusion matrix from argmax (or given) predictions and report."""
    probs = np.asarray(probs, dtype=np.float64)
    pred = np.argmax(probs, axis=1) if predicted is None else np.asarray([int(p) for p in predicted])
    cm = accumulate(zip(truth, pred), probs.shape[1])
    ids = sample_ids if sample_ids is not None else [str(i) for i in range(len(truth))]
    return report(cm, list(zip(ids, probs, truth)))

