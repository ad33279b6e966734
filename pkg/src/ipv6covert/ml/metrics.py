"""Confusion matrices and per-class / macro classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .forest import label_values


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray   # counts[actual, predicted]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, cls) -> int:
        return self.classes.index(str(getattr(cls, "value", cls)))

    def tp(self, cls) -> int:
        k = self.index(cls)
        return int(self.counts[k, k])

    def fp(self, cls) -> int:
        k = self.index(cls)
        return int(self.counts[:, k].sum() - self.counts[k, k])

    def fn(self, cls) -> int:
        k = self.index(cls)
        return int(self.counts[k, :].sum() - self.counts[k, k])

    def tn(self, cls) -> int:
        return self.total - self.tp(cls) - self.fp(cls) - self.fn(cls)

    def format(self) -> str:
        width = max(9, *(len(c) for c in self.classes)) + 1
        lines = ["actual \\ predicted".ljust(width) + "".join(c.rjust(width) for c in self.classes)]
        for c, row in zip(self.classes, self.counts):
            lines.append(c.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
        return "\n".join(lines)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    total: int

    def f1(self, cls) -> float:
        return self.per_class[str(getattr(cls, "value", cls))].f1

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "total": self.total,
            "per_class": {c: vars(m) for c, m in self.per_class.items()},
        }

    def format(self) -> str:
        lines = [f"{'class':<12}{'precision':>10}{'recall':>10}{'f1':>10}{'accuracy':>10}{'support':>9}"]
        for c, m in self.per_class.items():
            lines.append(f"{c:<12}{m.precision:>10.4f}{m.recall:>10.4f}{m.f1:>10.4f}"
                         f"{m.accuracy:>10.4f}{m.support:>9d}")
        lines.append(f"{'macro':<12}{self.macro_precision:>10.4f}{self.macro_recall:>10.4f}"
                     f"{self.macro_f1:>10.4f}")
        lines.append(f"overall accuracy {self.accuracy:.4f} over {self.total} samples")
        return "\n".join(lines)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def confusion_matrix(predicted: Sequence, actual: Sequence,
                     classes: Optional[Sequence] = None) -> ConfusionMatrix:
    pred, act = label_values(predicted), label_values(actual)
    if len(pred) != len(act):
        raise ValueError(f"{len(pred)} predictions for {len(act)} labels")
    if classes is None:
        classes = tuple(sorted(set(pred) | set(act)))
    else:
        classes = tuple(label_values(classes))
    index = {c: k for k, c in enumerate(classes)}
    unknown = sorted((set(pred) | set(act)) - set(index))
    if unknown:
        raise ValueError(f"labels {unknown} are not among classes {list(classes)}")
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, ([index[a] for a in act], [index[p] for p in pred]), 1)
    return ConfusionMatrix(classes, counts)


def evaluate(predicted: Sequence, actual: Sequence,
             classes: Optional[Sequence] = None) -> tuple[ConfusionMatrix, MetricsReport]:
    """Score predictions against ground truth.

    Per-class numbers are one-vs-rest. Precision or recall with a zero
    denominator, and F1 when both are zero, count as 0. Macro averages run
    over the classes that occur in either ``actual`` or ``predicted``;
    overall accuracy is the diagonal over the total.
    """
    cm = confusion_matrix(predicted, actual, classes)
    total = cm.total
    if total == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    per_class = {}
    macro = []
    for k, c in enumerate(cm.classes):
        tp, fp, fn = cm.tp(c), cm.fp(c), cm.fn(c)
        tn = total - tp - fp - fn
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        f1 = _ratio(2 * p * r, p + r)
        per_class[c] = ClassMetrics(p, r, f1, (tp + tn) / total, tp + fn)
        if tp + fn + fp:
            macro.append((p, r, f1))
    mp, mr, mf = (float(np.mean(v)) for v in zip(*macro))
    return cm, MetricsReport(per_class, mp, mr, mf, float(np.trace(cm.counts)) / total, total)
