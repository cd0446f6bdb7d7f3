"""Classification metrics: confusion matrix, per-class and macro scores.

Macro averages are unweighted means over classes. A class with no test
samples, or a metric that is undefined for it (precision when the class
is never predicted), is left out of the corresponding macro average and
reported as NaN per class; every exclusion raises a warning so silent
metric inflation cannot happen.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassMetrics",
    "EvalReport",
    "UndefinedMetricWarning",
    "compute_report",
    "report_to_text",
    "confusion_to_csv",
    "history_to_csv",
]


class UndefinedMetricWarning(UserWarning):
    """A class was excluded from a macro average."""


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float  # NaN when the class is never predicted
    recall: float  # NaN when the class has no test samples
    f1: float  # NaN when either side is undefined
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: tuple[ClassMetrics, ...]
    confusion: np.ndarray  # rows = true class, columns = predicted

    def __post_init__(self):
        confusion = np.asarray(self.confusion, dtype=np.int64)
        confusion.setflags(write=False)
        object.__setattr__(self, "confusion", confusion)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def _macro(values, what, labels):
    values = np.asarray(values, dtype=np.float64)
    defined = ~np.isnan(values)
    if not np.all(defined):
        skipped = [labels[i] for i in np.flatnonzero(~defined)]
        warnings.warn(
            f"macro {what} excludes {', '.join(skipped)} (undefined)",
            UndefinedMetricWarning,
            stacklevel=3,
        )
    if not np.any(defined):
        return float("nan")
    return float(values[defined].mean())


def compute_report(true_classes, predicted_classes, labels) -> EvalReport:
    """Score predictions against truth.

    ``labels`` names each class index; both inputs are index sequences
    in [0, len(labels)).
    """
    k = len(labels)
    true_arr = np.asarray(true_classes, dtype=np.int64)
    pred_arr = np.asarray(predicted_classes, dtype=np.int64)
    if true_arr.shape != pred_arr.shape or true_arr.ndim != 1:
        raise ValueError(
            f"need matching 1-D class index arrays, got {true_arr.shape} "
            f"and {pred_arr.shape}"
        )
    if len(true_arr) == 0:
        raise ValueError("cannot evaluate an empty test set")
    for name, arr in (("true", true_arr), ("predicted", pred_arr)):
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(f"{name} class index outside [0, {k})")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true_arr, pred_arr), 1)

    supports = confusion.sum(axis=1)
    predicted_counts = confusion.sum(axis=0)
    diagonal = np.diag(confusion)
    per_class = []
    precisions, recalls, f1s = [], [], []
    for i in range(k):
        precision = (
            diagonal[i] / predicted_counts[i] if predicted_counts[i] > 0 else float("nan")
        )
        recall = diagonal[i] / supports[i] if supports[i] > 0 else float("nan")
        if np.isnan(precision) or np.isnan(recall):
            f1 = float("nan")
        elif precision + recall == 0.0:
            f1 = 0.0
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        if supports[i] == 0:
            # absent classes never enter any macro average
            precision = recall = f1 = float("nan")
        per_class.append(
            ClassMetrics(
                label=str(labels[i]),
                precision=float(precision),
                recall=float(recall),
                f1=float(f1),
                support=int(supports[i]),
            )
        )
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    label_names = [str(l) for l in labels]
    return EvalReport(
        accuracy=float(diagonal.sum() / len(true_arr)),
        macro_precision=_macro(precisions, "precision", label_names),
        macro_recall=_macro(recalls, "recall", label_names),
        macro_f1=_macro(f1s, "f1", label_names),
        per_class=tuple(per_class),
        confusion=confusion,
    )


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"


def report_to_text(report: EvalReport) -> str:
    """Canonical key=value rendering, one metric per line."""
    lines = [
        f"accuracy={_fmt(report.accuracy)}",
        f"macro_precision={_fmt(report.macro_precision)}",
        f"macro_recall={_fmt(report.macro_recall)}",
        f"macro_f1={_fmt(report.macro_f1)}",
        f"total={report.total}",
    ]
    for cm in report.per_class:
        lines.append(
            f"class.{cm.label}.precision={_fmt(cm.precision)}"
        )
        lines.append(f"class.{cm.label}.recall={_fmt(cm.recall)}")
        lines.append(f"class.{cm.label}.f1={_fmt(cm.f1)}")
        lines.append(f"class.{cm.label}.support={cm.support}")
    return "\n".join(lines) + "\n"


def confusion_to_csv(report: EvalReport) -> str:
    """Confusion matrix as CSV: header row of predicted labels, one row
    per true class."""
    labels = [cm.label for cm in report.per_class]
    out = io.StringIO()
    out.write("true\\pred," + ",".join(labels) + "\n")
    for label, row in zip(labels, report.confusion):
        out.write(label + "," + ",".join(str(int(v)) for v in row) + "\n")
    return out.getvalue()


def history_to_csv(history) -> str:
    """Training history rows (epoch, loss, accuracy) as CSV text."""
    out = io.StringIO()
    out.write("epoch,loss,accuracy\n")
    for record in history:
        out.write(f"{record.epoch},{record.loss:.8f},{record.accuracy:.6f}\n")
    return out.getvalue()
