"""Confusion-matrix metrics and multi-trial box-plot aggregation."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")
TRIAL_CSV_HEADER = ["trial", "classifier", *METRIC_NAMES]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, cols: predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty(self) -> bool:
        return self.total == 0


@dataclass
class MetricsRecord:
    accuracy: float
    precision: float
    recall: float
    f1: float


def confusion_matrix(y_true, y_pred, k: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise InvalidInputError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise InvalidInputError(f"{name} contains labels outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def _safe_ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    zero = den == 0
    if zero.any():
        warnings.warn(f"{what} undefined for classes {np.flatnonzero(zero).tolist()}; using 0")
    return np.where(zero, 0.0, num / np.where(zero, 1, den))


def per_class_scores(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    precision = _safe_ratio(tp, c.sum(axis=0), "precision")
    recall = _safe_ratio(tp, c.sum(axis=1), "recall")
    denom = precision + recall
    f1 = np.where(denom == 0, 0.0, 2 * precision * recall / np.where(denom == 0, 1, denom))
    return precision, recall, f1


def classification_metrics(cm: ConfusionMatrix) -> MetricsRecord:
    """Accuracy plus macro-averaged precision, recall and per-class F1."""
    if cm.empty:
        raise InvalidInputError("cannot compute metrics from an empty confusion matrix")
    precision, recall, f1 = per_class_scores(cm)
    return MetricsRecord(
        accuracy=float(np.trace(cm.counts) / cm.total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
    )


@dataclass
class Summary:
    mean: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass
class TrialAggregate:
    n_trials: int
    accuracy: Summary
    precision: Summary
    recall: Summary
    f1: Summary

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(values) -> Summary:
    v = np.asarray(values, dtype=np.float64)
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return Summary(float(v.mean()), *(float(x) for x in q))


def aggregate_trials(records: list[MetricsRecord]) -> TrialAggregate:
    if not records:
        raise InvalidInputError("no trial records to aggregate")
    cols = {m: summarize([getattr(r, m) for r in records]) for m in METRIC_NAMES}
    return TrialAggregate(n_trials=len(records), **cols)


def write_trials_csv(path: str | Path, rows: list[tuple[int, str, MetricsRecord]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_CSV_HEADER)
        for trial, name, rec in rows:
            w.writerow([trial, name, *(repr(float(getattr(rec, m))) for m in METRIC_NAMES)])


def read_trials_csv(path: str | Path) -> list[tuple[int, str, MetricsRecord]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRIAL_CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
        return [(int(r["trial"]), r["classifier"],
                 MetricsRecord(*(float(r[m]) for m in METRIC_NAMES))) for r in reader]


def aggregate_by_classifier(rows) -> dict[str, TrialAggregate]:
    grouped: dict[str, list[MetricsRecord]] = {}
    for _, name, rec in rows:
        grouped.setdefault(name, []).append(rec)
    return {name: aggregate_trials(recs) for name, recs in grouped.items()}


def write_aggregate_json(path: str | Path, aggregates: dict[str, TrialAggregate],
                         extra: dict | None = None) -> None:
    doc = {"classifiers": {k: v.to_dict() for k, v in aggregates.items()}}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
