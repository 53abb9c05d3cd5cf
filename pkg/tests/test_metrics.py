"""Oracle and property tests for the imbalanced-classification metrics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mammossl import (
    ConfusionMatrix,
    ContractError,
    MetricReport,
    accuracy,
    aggregate,
    balanced_accuracy,
    compute_report,
    confusion_from_predictions,
    fbeta,
    g_mean,
    metric_records,
    precision,
    recall,
    specificity,
)
from mammossl.metrics import METRIC_NAMES


def brute_force_metrics(tp, fp, tn, fn, beta=2.0):
    """Direct formula evaluation, written independently of the library."""
    total = tp + fp + tn + fn
    acc = (tp + tn) / total if total else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    fb_den = beta * beta * prec + rec
    fb = (1 + beta * beta) * prec * rec / fb_den if fb_den else 0.0
    ba = 0.5 * (rec + spec)
    gm = math.sqrt(rec * spec)
    return acc, rec, spec, prec, fb, ba, gm


def test_metric_oracle_equivalence_1000_matrices():
    rng = np.random.default_rng(12345)
    for _ in range(1000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 200, size=4))
        if tp + fp + tn + fn == 0:
            tp = 1
        cm = ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)
        expected = brute_force_metrics(tp, fp, tn, fn)
        got = (
            accuracy(cm),
            recall(cm),
            specificity(cm),
            precision(cm),
            fbeta(cm),
            balanced_accuracy(cm),
            g_mean(cm),
        )
        for name, e, g in zip(METRIC_NAMES, expected, got):
            assert abs(e - g) <= 1e-12, (name, cm)


def test_all_negative_predictor_accuracy_090():
    # 90 negatives, 10 positives, predict everything negative
    y_true = np.array([0] * 90 + [1] * 10)
    y_pred = np.zeros(100, dtype=int)
    cm = confusion_from_predictions(y_true, y_pred)
    assert cm == ConfusionMatrix(tp=0, fp=0, tn=90, fn=10)
    assert accuracy(cm) == pytest.approx(0.90, abs=1e-12)
    # the same predictor has recall 0, so the recall-aware scores collapse
    report = compute_report(cm)
    assert report.recall == 0.0
    assert report.g_mean == 0.0


def test_low_recall_perfect_specificity_examples():
    # recall 0.1, specificity 1.0: balanced accuracy 0.55, G-Mean sqrt(0.1)
    cm = ConfusionMatrix(tp=1, fn=9, tn=50, fp=0)
    assert recall(cm) == pytest.approx(0.1, abs=1e-12)
    assert specificity(cm) == pytest.approx(1.0, abs=1e-12)
    assert balanced_accuracy(cm) == pytest.approx(0.55, abs=1e-12)
    gm = g_mean(cm)
    assert gm == pytest.approx(0.31622776601683794, abs=1e-12)
    # printed two-decimal figure 0.31 comes from truncation, not rounding
    assert int(gm * 100) == 31


def test_fbeta_quarter_precision_three_quarter_recall():
    # P=0.25, R=0.75, beta=2: (1+4)*0.25*0.75 / (4*0.25 + 0.75) = 15/28
    cm = ConfusionMatrix(tp=3, fn=1, fp=9, tn=0)
    assert precision(cm) == pytest.approx(0.25, abs=1e-12)
    assert recall(cm) == pytest.approx(0.75, abs=1e-12)
    assert fbeta(cm) == pytest.approx(15.0 / 28.0, abs=1e-12)


def test_fbeta_beta_one_is_harmonic_mean():
    cm = ConfusionMatrix(tp=30, fp=10, tn=50, fn=10)
    p = precision(cm)
    r = recall(cm)
    assert fbeta(cm, beta=1.0) == pytest.approx(2 * p * r / (p + r), abs=1e-12)


def test_degenerate_denominators_flagged():
    # no positives at all: recall undefined
    cm = ConfusionMatrix(tp=0, fn=0, tn=5, fp=5)
    assert recall(cm) == 0.0
    report = compute_report(cm)
    assert "recall" in report.degenerate
    assert "g_mean" in report.degenerate
    assert "balanced_accuracy" in report.degenerate
    assert "f2" in report.degenerate
    assert report.recall == 0.0

    # no predicted positives: precision undefined
    cm = ConfusionMatrix(tp=0, fn=3, tn=5, fp=0)
    assert precision(cm) == 0.0
    report = compute_report(cm)
    assert "precision" in report.degenerate
    assert "f2" in report.degenerate


def test_confusion_from_predictions_counting():
    rng = np.random.default_rng(7)
    y_true = rng.integers(0, 2, size=500)
    y_pred = rng.integers(0, 2, size=500)
    cm = confusion_from_predictions(y_true, y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    assert cm == ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def test_confusion_from_predictions_positive_label():
    y_true = np.array([0, 0, 1, 1])
    y_pred = np.array([0, 1, 0, 1])
    flipped = confusion_from_predictions(y_true, y_pred, positive_label=0)
    assert flipped == ConfusionMatrix(tp=1, fp=1, tn=1, fn=1)


def test_confusion_validation():
    with pytest.raises(ContractError):
        ConfusionMatrix(tp=-1, fp=0, tn=0, fn=0)
    with pytest.raises(ContractError):
        confusion_from_predictions(np.array([0, 1]), np.array([0]))


@given(
    tp=st.integers(1, 500),
    fp=st.integers(0, 500),
    tn=st.integers(1, 500),
    fn=st.integers(0, 500),
)
@settings(max_examples=200, deadline=None)
def test_balanced_accuracy_dominates_g_mean(tp, fp, tn, fn):
    # arithmetic mean >= geometric mean whenever both terms are defined
    cm = ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)
    assert balanced_accuracy(cm) >= g_mean(cm) - 1e-12


@given(
    tp=st.integers(0, 500),
    fp=st.integers(0, 500),
    tn=st.integers(0, 500),
    fn=st.integers(0, 500),
)
@settings(max_examples=200, deadline=None)
def test_all_metrics_in_unit_interval(tp, fp, tn, fn):
    if tp + fp + tn + fn == 0:
        tp = 1
    report = compute_report(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn))
    for name in METRIC_NAMES:
        value = getattr(report, name)
        assert 0.0 <= value <= 1.0 + 1e-12, name


def _make_report(seed):
    rng = np.random.default_rng(seed)
    tp, fp, tn, fn = (int(v) + 1 for v in rng.integers(0, 50, size=4))
    return compute_report(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn))


def test_aggregate_two_pass_oracle():
    reports = [_make_report(s) for s in range(10)]
    summary = aggregate(reports)
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        got_mean, got_std = summary[name]
        assert got_mean == pytest.approx(mean, abs=1e-12)
        assert got_std == pytest.approx(math.sqrt(var), abs=1e-12)


def test_aggregate_single_report_zero_std():
    summary = aggregate([_make_report(3)])
    for name in METRIC_NAMES:
        assert summary[name][1] == 0.0


def test_aggregate_empty_rejected():
    with pytest.raises(ContractError):
        aggregate([])


def test_metric_records_shape():
    reports = [_make_report(s) for s in range(4)]
    records = metric_records("SSDL", "synthetic", 20, aggregate(reports))
    assert len(records) == len(METRIC_NAMES)
    f2 = next(r for r in records if r["metric"] == "f2")
    assert f2["config"] == "SSDL"
    assert f2["n_labels"] == 20
    summary = aggregate(reports)
    assert f2["mean"] == pytest.approx(summary["f2"][0], abs=1e-15)
    assert f2["std"] == pytest.approx(summary["f2"][1], abs=1e-15)


def test_report_as_dict_values():
    report = _make_report(11)
    doc = report.as_dict()
    assert set(doc) == set(METRIC_NAMES)
    assert doc["g_mean"] == report.g_mean
    assert doc["f2"] == report.f2
