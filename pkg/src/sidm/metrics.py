"""Confusion matrix, accuracy/precision/recall/F1, ROC-AUC, MSE/RMSE, and
report serialization (plot-ready CSVs, no rendering)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class RocCurve:
    """Points (fpr, tpr) per distinct score threshold, plus (0,0) and (1,1)."""

    points: list[tuple[float, float]]
    auc: float


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc_roc: float
    mse: float
    rmse: float
    confusion: ConfusionMatrix
    threshold: float = 0.5


def _check_pair(labels, probs) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    probs = np.asarray(probs, dtype=np.float64)
    if labels.shape != probs.shape or labels.ndim != 1:
        raise ValueError(
            f"labels and probs must be equal-length vectors, got "
            f"{labels.shape} and {probs.shape}"
        )
    if labels.size == 0:
        raise ValueError("cannot compute metrics on empty input")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    return labels.astype(np.int64), probs


def confusion(labels, probs, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally counts with prob >= threshold predicted positive."""
    labels, probs = _check_pair(labels, probs)
    pred = probs >= threshold
    actual = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & actual)),
        fp=int(np.sum(pred & ~actual)),
        tn=int(np.sum(~pred & ~actual)),
        fn=int(np.sum(~pred & actual)),
    )


def scalar_metrics(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1); zero denominators yield 0."""
    if cm.total == 0:
        raise ValueError("confusion matrix is empty")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return accuracy, precision, recall, f1


def roc_auc(labels, probs) -> RocCurve:
    """ROC by sweeping distinct scores descending; AUC by the trapezoidal rule.

    With ties grouped per distinct score, the trapezoid area equals the
    pairwise statistic P[score_pos > score_neg] + 0.5 P[equal].
    """
    labels, probs = _check_pair(labels, probs)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    sorted_labels = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < labels.size:
        j = i
        while j < labels.size and sorted_probs[j] == sorted_probs[i]:
            tp += int(sorted_labels[j] == 1)
            fp += int(sorted_labels[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=auc)


def mse_rmse(labels, probs) -> tuple[float, float]:
    """Brier-style error on raw probabilities against the 0/1 labels."""
    labels, probs = _check_pair(labels, probs)
    mse = float(np.mean((probs - labels) ** 2))
    return mse, math.sqrt(mse)


def compute_report(labels, probs, threshold: float = 0.5) -> tuple[MetricsReport, RocCurve]:
    cm = confusion(labels, probs, threshold)
    accuracy, precision, recall, f1 = scalar_metrics(cm)
    roc = roc_auc(labels, probs)
    mse, rmse = mse_rmse(labels, probs)
    report = MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        auc_roc=roc.auc,
        mse=mse,
        rmse=rmse,
        confusion=cm,
        threshold=threshold,
    )
    return report, roc


REPORT_KEYS = (
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc_roc",
    "mse",
    "rmse",
    "threshold",
    "tp",
    "fp",
    "tn",
    "fn",
)


def emit_report(report: MetricsReport, roc: RocCurve, out_dir: str | Path) -> list[Path]:
    """Write metrics.json, roc.csv (fpr,tpr) and confusion.csv; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "auc_roc": report.auc_roc,
        "mse": report.mse,
        "rmse": report.rmse,
        "threshold": report.threshold,
        "tp": report.confusion.tp,
        "fp": report.confusion.fp,
        "tn": report.confusion.tn,
        "fn": report.confusion.fn,
    }
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    roc_path = out_dir / "roc.csv"
    with roc_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in roc.points:
            writer.writerow([repr(fpr), repr(tpr)])

    confusion_path = out_dir / "confusion.csv"
    with confusion_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", "predicted_positive", "predicted_negative"])
        writer.writerow(["actual_positive", report.confusion.tp, report.confusion.fn])
        writer.writerow(["actual_negative", report.confusion.fp, report.confusion.tn])
    return [metrics_path, roc_path, confusion_path]


def parse_report(path: str | Path) -> MetricsReport:
    """Inverse of the metrics.json half of emit_report."""
    data = json.loads(Path(path).read_text())
    missing = set(REPORT_KEYS) - set(data)
    if missing:
        raise ValueError(f"metrics file missing keys: {sorted(missing)}")
    return MetricsReport(
        accuracy=data["accuracy"],
        precision=data["precision"],
        recall=data["recall"],
        f1=data["f1"],
        auc_roc=data["auc_roc"],
        mse=data["mse"],
        rmse=data["rmse"],
        confusion=ConfusionMatrix(
            tp=data["tp"], fp=data["fp"], tn=data["tn"], fn=data["fn"]
        ),
        threshold=data["threshold"],
    )
