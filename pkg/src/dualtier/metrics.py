"""Confusion matrices and accuracy / precision / recall / F1 on the percent scale.

Precision, recall and F1 are 0 whenever their denominator is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    class_names: list[str]
    counts: np.ndarray  # rows: truth, columns: prediction

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise KeyError(f"class {name!r} not in confusion matrix") from None

    def one_vs_rest(self, name: str) -> tuple[int, int, int, int]:
        """(TP, TN, FP, FN) treating ``name`` as the positive class."""
        i = self.index(name)
        tp = int(self.counts[i, i])
        fn = int(self.counts[i].sum()) - tp
        fp = int(self.counts[:, i].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn


@dataclass
class MetricsReport:
    accuracy: float
    precision: dict[str, float] = field(default_factory=dict)
    recall: dict[str, float] = field(default_factory=dict)
    f1: dict[str, float] = field(default_factory=dict)
    support: dict[str, int] = field(default_factory=dict)
    macro_f1: float = 0.0
    weighted_f1: float = 0.0

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": dict(self.precision),
            "recall": dict(self.recall),
            "f1": dict(self.f1),
            "support": dict(self.support),
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
        }


def confusion(y_true, y_pred, class_names=None) -> ConfusionMatrix:
    y_true = [str(v) for v in y_true]
    y_pred = [str(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} truths, {len(y_pred)} predictions")
    if class_names is None:
        class_names = sorted(set(y_true) | set(y_pred))
    class_names = list(class_names)
    index = {c: i for i, c in enumerate(class_names)}
    counts = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(class_names, counts)


def _ratio(num: float, den: float) -> float:
    return 100.0 * float(num) / float(den) if den else 0.0


def _f1(p: float, r: float) -> float:
    # p and r are already percentages, so no further x100
    return 2.0 * p * r / (p + r) if p + r else 0.0


def binary_metrics(matrix: ConfusionMatrix, positive: str) -> MetricsReport:
    if len(matrix.class_names) != 2:
        raise ValueError("binary_metrics needs a 2-class confusion matrix")
    tp, tn, fp, fn = matrix.one_vs_rest(positive)
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f = _f1(p, r)
    return MetricsReport(
        accuracy=_ratio(tp + tn, tp + tn + fp + fn),
        precision={positive: p},
        recall={positive: r},
        f1={positive: f},
        support={positive: tp + fn},
        macro_f1=f,
        weighted_f1=f,
    )


def multiclass_metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """One-vs-rest per class; weighted F1 uses true-class support as weights."""
    if not matrix.class_names or matrix.total == 0:
        raise ValueError("empty confusion matrix")
    rep = MetricsReport(accuracy=_ratio(np.trace(matrix.counts), matrix.total))
    for name in matrix.class_names:
        tp, _, fp, fn = matrix.one_vs_rest(name)
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        rep.precision[name] = p
        rep.recall[name] = r
        rep.f1[name] = _f1(p, r)
        rep.support[name] = tp + fn
    supported = [c for c in matrix.class_names if rep.support[c] > 0]
    rep.macro_f1 = float(np.mean([rep.f1[c] for c in supported])) if supported else 0.0
    total = sum(rep.support.values())
    rep.weighted_f1 = sum(rep.f1[c] * rep.support[c] for c in matrix.class_names) / total
    return rep


def per_attack_accuracy(y_true, y_pred, attack: str, classes=None) -> float:
    """TP_x / (TP_x + TN_x + FP_x + FN_x) x 100, exactly as printed.

    This is the share of all instances that are correctly flagged as
    ``attack``; see :func:`per_attack_summary` for conventional companions.
    """
    return per_attack_summary(y_true, y_pred, attack, classes)["printed"]


def per_attack_summary(y_true, y_pred, attack: str, classes=None) -> dict[str, float]:
    y_true = [str(v) for v in y_true]
    y_pred = [str(v) for v in y_pred]
    known = set(classes) if classes is not None else set(y_true) | set(y_pred)
    if attack not in known:
        raise KeyError(f"unknown class {attack!r}")
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch")
    tp = sum(t == attack and p == attack for t, p in zip(y_true, y_pred))
    fn = sum(t == attack and p != attack for t, p in zip(y_true, y_pred))
    fp = sum(t != attack and p == attack for t, p in zip(y_true, y_pred))
    tn = len(y_true) - tp - fn - fp
    total = tp + tn + fp + fn
    return {
        "printed": _ratio(tp, total),
        "recall": _ratio(tp, tp + fn),
        "one_vs_rest_accuracy": _ratio(tp + tn, total),
    }
