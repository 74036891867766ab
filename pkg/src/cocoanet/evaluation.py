"""Confusion matrices and per-class / macro precision, recall, F1 and accuracy.

All metric values are percentages. A 0/0 ratio is defined as 0 and logged.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np

from . import CLASS_NAMES

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "csv", "text")


def confusion_from_predictions(true_labels, predicted_labels, num_classes: int = 3) -> np.ndarray:
    """Cell (i, j) counts samples of true class i predicted as j."""
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"label sequences differ in length: {t.size} vs {p.size}")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} labels must lie in 0..{num_classes - 1}")
    return np.bincount(t * num_classes + p, minlength=num_classes * num_classes).reshape(
        num_classes, num_classes)


def _ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    ok = den > 0
    out[ok] = 100.0 * num[ok] / den[ok]
    if not ok.all():
        logger.warning("%s undefined (0/0) for classes %s; reported as 0", what,
                       np.flatnonzero(~ok).tolist())
    return out


def per_class_metrics(cm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(precision, recall, F1) per class, in percent."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm)
    precision = _ratio(tp, cm.sum(axis=0), "precision")
    recall = _ratio(tp, cm.sum(axis=1), "recall")
    f1 = np.zeros_like(precision)
    s = precision + recall
    ok = s > 0
    f1[ok] = 2.0 * precision[ok] * recall[ok] / s[ok]
    return precision, recall, f1


def macro_average(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(values.sum() / values.size)


def accuracy(cm) -> float:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return 100.0 * float(np.trace(cm)) / float(total)


def round2(x: float) -> float:
    """Round to 2 decimals, half to even, on the decimal representation."""
    return float(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def _fmt(x: float) -> str:
    return f"{Decimal(repr(round2(x))).quantize(Decimal('0.01')).normalize():f}"


@dataclass
class MetricsReport:
    class_names: list[str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    confusion: list[list[int]]
    model: str = ""
    epoch: int | None = None
    split: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "epoch": self.epoch,
            "split": self.split,
            "classes": {
                name: {"precision": self.precision[i], "recall": self.recall[i],
                       "f1": self.f1[i], "support": self.support[i]}
                for i, name in enumerate(self.class_names)
            },
            "overall": {"precision": self.macro_precision, "recall": self.macro_recall,
                        "f1": self.macro_f1, "accuracy": self.accuracy},
            "confusion_matrix": self.confusion,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        names = list(d["classes"])
        rows = [d["classes"][n] for n in names]
        o = d["overall"]
        return cls(names, [r["precision"] for r in rows], [r["recall"] for r in rows],
                   [r["f1"] for r in rows], [r["support"] for r in rows], o["precision"],
                   o["recall"], o["f1"], o["accuracy"], d["confusion_matrix"], d.get("model", ""),
                   d.get("epoch"), d.get("split", ""))


def build_report(cm, class_names=CLASS_NAMES, model: str = "", epoch: int | None = None,
                 split: str = "") -> MetricsReport:
    """Per-class and macro metrics of ``cm``, rounded to 2 decimals (macro from unrounded)."""
    cm = np.asarray(cm, dtype=np.int64)
    p, r, f = per_class_metrics(cm)
    return MetricsReport(
        list(class_names), [round2(v) for v in p], [round2(v) for v in r], [round2(v) for v in f],
        [int(v) for v in cm.sum(axis=1)], round2(macro_average(p)), round2(macro_average(r)),
        round2(macro_average(f)), round2(accuracy(cm)), cm.tolist(), model, epoch, split)


def render_report(report: MetricsReport, fmt: str = "text") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "accuracy"])
        for i, name in enumerate(report.class_names):
            w.writerow([name, report.precision[i], report.recall[i], report.f1[i], ""])
        w.writerow(["Overall", report.macro_precision, report.macro_recall, report.macro_f1,
                    report.accuracy])
        return buf.getvalue().encode("utf-8")
    if fmt == "text":
        width = max(12, *(len(n) for n in report.class_names))
        head = f"{'Class':<{width}} {'Precision':>10} {'Recall':>10} {'F1':>10} {'Acc':>6}"
        lines = [head, "-" * len(head)]
        for i, name in enumerate(report.class_names):
            lines.append(f"{name:<{width}} {_fmt(report.precision[i]):>10} "
                         f"{_fmt(report.recall[i]):>10} {_fmt(report.f1[i]):>10} {'--':>6}")
        lines.append("-" * len(head))
        lines.append(f"{'Overall':<{width}} {_fmt(report.macro_precision):>10} "
                     f"{_fmt(report.macro_recall):>10} {_fmt(report.macro_f1):>10} "
                     f"{_fmt(report.accuracy):>6}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
