"""Weighted accuracy / weighted F1 from a confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    confusion: np.ndarray  # rows: true class, columns: predicted class
    per_class_accuracy: np.ndarray
    per_class_f1: np.ndarray
    w_acc: float
    w_f1: float
    param_count: int = 0
    seconds: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def csv_rows(self) -> list[tuple]:
        rows = [("class", "support", "accuracy", "f1")]
        for c in range(len(self.support)):
            rows.append((str(c), str(int(self.support[c])), repr(float(self.per_class_accuracy[c])),
                         repr(float(self.per_class_f1[c]))))
        rows.append(("W-Acc", str(int(self.support.sum())), repr(self.w_acc), ""))
        rows.append(("W-F1", str(int(self.support.sum())), "", repr(self.w_f1)))
        rows.append(("params", str(self.param_count), "", ""))
        return rows

    def table(self) -> str:
        lines = [f"{'class':>6} {'support':>8} {'acc':>8} {'f1':>8}"]
        for c in range(len(self.support)):
            lines.append(f"{c:>6} {int(self.support[c]):>8} {self.per_class_accuracy[c]:>8.4f} "
                         f"{self.per_class_f1[c]:>8.4f}")
        lines.append(f"{'W-Acc':>6} {int(self.support.sum()):>8} {self.w_acc:>8.4f}")
        lines.append(f"{'W-F1':>6} {int(self.support.sum()):>8} {'':>8} {self.w_f1:>8.4f}")
        lines.append(f"parameters: {self.param_count}")
        return "\n".join(lines)


def compute_metrics(labels, preds, n_classes: int, param_count: int = 0, seconds: float = 0.0) -> MetricsReport:
    """Per-class F1 is ``2PR/(P+R)``, taken as 0 when ``P + R = 0``."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot score an empty dataset")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    recall = np.divide(tp, support, out=np.zeros(n_classes), where=support > 0)
    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    n = support.sum()
    return MetricsReport(
        confusion=cm,
        per_class_accuracy=recall,
        per_class_f1=f1,
        w_acc=float(tp.sum() / n),
        w_f1=float(np.sum(support / n * f1)),
        param_count=param_count,
        seconds=seconds,
    )
