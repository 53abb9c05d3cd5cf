"""Binary-classification metrics that stay honest under heavy class imbalance.

Plain accuracy rewards predicting the majority class; everything here exists
so a run that ignores the minority class scores near zero instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

METRIC_NAMES = ("accuracy", "recall", "specificity", "precision", "f2", "balanced_accuracy", "g_mean")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        counts = (self.tp, self.fp, self.tn, self.fn)
        if any(int(c) != c or c < 0 for c in counts):
            raise ContractError("confusion counts must be non-negative integers")
        if sum(counts) < 1:
            raise ContractError("confusion matrix must contain at least one observation")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_from_predictions(y_true, y_pred, positive_label=1) -> ConfusionMatrix:
    """Tally a confusion matrix; every label other than positive_label counts as negative."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size < 1:
        raise ContractError("y_true and y_pred must be equal-length non-empty vectors")
    t = y_true == positive_label
    p = y_pred == positive_label
    return ConfusionMatrix(
        tp=int(np.sum(t & p)),
        fp=int(np.sum(~t & p)),
        tn=int(np.sum(~t & ~p)),
        fn=int(np.sum(t & ~p)),
    )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    # degenerate denominator reports 0.0 and a flag instead of raising
    if den == 0:
        return 0.0, True
    return num / den, False


def accuracy(cm: ConfusionMatrix) -> float:
    return (cm.tp + cm.tn) / cm.total


def recall(cm: ConfusionMatrix) -> float:
    """True-positive rate tp/(tp+fn); 0.0 when there are no positives."""
    return _ratio(cm.tp, cm.tp + cm.fn)[0]


def specificity(cm: ConfusionMatrix) -> float:
    """True-negative rate tn/(tn+fp); 0.0 when there are no negatives."""
    return _ratio(cm.tn, cm.tn + cm.fp)[0]


def precision(cm: ConfusionMatrix) -> float:
    """tp/(tp+fp); 0.0 when nothing was predicted positive."""
    return _ratio(cm.tp, cm.tp + cm.fp)[0]


def fbeta(cm: ConfusionMatrix, beta: float = 2.0) -> float:
    """(1+b^2)*P*R / (b^2*P + R); beta>1 leans toward recall. 0.0 when undefined."""
    if beta <= 0:
        raise ContractError("beta must be positive")
    p = precision(cm)
    r = recall(cm)
    den = beta * beta * p + r
    if den == 0.0:
        return 0.0
    return (1.0 + beta * beta) * p * r / den


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    return (recall(cm) + specificity(cm)) / 2.0


def g_mean(cm: ConfusionMatrix) -> float:
    return math.sqrt(recall(cm) * specificity(cm))


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    recall: float
    specificity: float
    precision: float
    f2: float
    balanced_accuracy: float
    g_mean: float
    degenerate: frozenset[str]

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def compute_report(cm: ConfusionMatrix) -> MetricReport:
    """All seven metrics at once, with flags naming any degenerate denominators."""
    rec, rec_bad = _ratio(cm.tp, cm.tp + cm.fn)
    spec, spec_bad = _ratio(cm.tn, cm.tn + cm.fp)
    prec, prec_bad = _ratio(cm.tp, cm.tp + cm.fp)
    flags = set()
    if rec_bad:
        flags.update({"recall", "balanced_accuracy", "g_mean", "f2"})
    if spec_bad:
        flags.update({"specificity", "balanced_accuracy", "g_mean"})
    if prec_bad:
        flags.update({"precision", "f2"})
    f2 = fbeta(cm, 2.0)
    if f2 == 0.0 and (prec_bad or rec_bad or (prec + rec == 0.0)):
        flags.add("f2")
    return MetricReport(
        accuracy=accuracy(cm),
        recall=rec,
        specificity=spec,
        precision=prec,
        f2=f2,
        balanced_accuracy=(rec + spec) / 2.0,
        g_mean=math.sqrt(rec * spec),
        degenerate=frozenset(flags),
    )


def aggregate(reports: list[MetricReport]) -> dict[str, tuple[float, float]]:
    """Per-metric (mean, sample std) across runs; std is 0.0 for a single run."""
    if not reports:
        raise ContractError("aggregate needs at least one report")
    out = {}
    for name in METRIC_NAMES:
        values = np.asarray([getattr(r, name) for r in reports], dtype=np.float64)
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        out[name] = (float(values.mean()), std)
    return out


def metric_records(config: str, source: str, n_labels: int, aggregated: dict[str, tuple[float, float]]) -> list[dict]:
    """Flatten an aggregate into {config, source, n_labels, metric, mean, std} rows."""
    return [
        {
            "config": config,
            "source": source,
            "n_labels": int(n_labels),
            "metric": name,
            "mean": aggregated[name][0],
            "std": aggregated[name][1],
        }
        for name in METRIC_NAMES
        if name in aggregated
    ]
