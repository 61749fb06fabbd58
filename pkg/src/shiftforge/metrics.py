"""Fold-level classification metrics and cross-validation aggregation.

The positive class for precision and recall is the defect label (nOK),
following defect-detection convention. The primary score is the harmonic
F1; because precision and recall are sometimes averaged arithmetically
instead, that reading is reported under a separate key, as is the
macro-averaged F1 over both classes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .manifest import LABEL_NOK, LABEL_OK

CLASS_INDEX = {LABEL_OK: 0, LABEL_NOK: 1}
CLASS_NAMES = (LABEL_OK, LABEL_NOK)


def fingerprint(obj: Any) -> str:
    """Stable sha256 over the canonical JSON encoding of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class SamplePrediction:
    """One test-sample prediction: defect probability plus provenance."""

    sample_id: str
    fold_index: int
    true_label: str
    prob_nok: float

    @property
    def predicted_label(self) -> str:
        return LABEL_NOK if self.prob_nok > 0.5 else LABEL_OK

    @property
    def confidence(self) -> float:
        """Max softmax probability of the prediction."""
        return max(self.prob_nok, 1.0 - self.prob_nok)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "fold_index": self.fold_index,
            "true_label": self.true_label,
            "prob_nok": self.prob_nok,
        }

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "SamplePrediction":
        return cls(
            sample_id=row["sample_id"],
            fold_index=int(row["fold_index"]),
            true_label=row["true_label"],
            prob_nok=float(row["prob_nok"]),
        )


def confusion_counts(true_labels: Iterable[str], predicted_labels: Iterable[str]) -> dict[str, int]:
    tp = fp = tn = fn = 0
    for truth, predicted in zip(true_labels, predicted_labels, strict=True):
        if truth == LABEL_NOK:
            if predicted == LABEL_NOK:
                tp += 1
            else:
                fn += 1
        else:
            if predicted == LABEL_NOK:
                fp += 1
            else:
                tn += 1
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float, tuple[str, ...]]:
    """Precision, recall, harmonic F1; zero denominators yield 0 and a flag."""
    degenerate: list[str] = []
    if tp + fp == 0:
        precision = 0.0
        degenerate.append("precision")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        degenerate.append("recall")
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        f1 = 0.0
        degenerate.append("f1")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1, tuple(degenerate)


@dataclass
class FoldResult:
    """Metrics of one fold's test set plus its per-sample outputs."""

    fold_index: int
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    f1_arithmetic: float
    f1_macro: float
    per_category_f1: dict[str, float] = field(default_factory=dict)
    degenerate_metrics: tuple[str, ...] = ()
    held_out_group: str | None = None
    predictions: list[SamplePrediction] = field(default_factory=list)
    embeddings: np.ndarray | None = None
    embedding_sample_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "fold_index": self.fold_index,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "f1_arithmetic": self.f1_arithmetic,
            "f1_macro": self.f1_macro,
            "per_category_f1": dict(sorted(self.per_category_f1.items())),
            "degenerate_metrics": list(self.degenerate_metrics),
            "held_out_group": self.held_out_group,
        }


def compute_fold_result(
    fold_index: int,
    sample_ids: list[str],
    true_labels: list[str],
    prob_nok: np.ndarray,
    categories: list[str] | None = None,
    held_out_group: str | None = None,
) -> FoldResult:
    """Score one fold from per-sample defect probabilities.

    Predictions are the argmax of the two class probabilities. Per-category
    F1 is computed on each category's subset when categories are given.
    """
    prob_nok = np.asarray(prob_nok, dtype=np.float64)
    predictions = [
        SamplePrediction(sample_id=s, fold_index=fold_index, true_label=t, prob_nok=float(p))
        for s, t, p in zip(sample_ids, true_labels, prob_nok, strict=True)
    ]
    predicted = [p.predicted_label for p in predictions]
    counts = confusion_counts(true_labels, predicted)
    precision, recall, f1, degenerate = precision_recall_f1(
        counts["tp"], counts["fp"], counts["fn"]
    )
    # Macro F1 treats each class as the positive class once.
    _, _, f1_ok, _ = precision_recall_f1(counts["tn"], counts["fn"], counts["fp"])
    f1_macro = (f1 + f1_ok) / 2.0

    per_category: dict[str, float] = {}
    if categories is not None:
        for category in sorted(set(categories)):
            keep = [i for i, c in enumerate(categories) if c == category]
            sub_counts = confusion_counts(
                [true_labels[i] for i in keep], [predicted[i] for i in keep]
            )
            _, _, category_f1, _ = precision_recall_f1(
                sub_counts["tp"], sub_counts["fp"], sub_counts["fn"]
            )
            per_category[category] = category_f1

    return FoldResult(
        fold_index=fold_index,
        f1=f1,
        precision=precision,
        recall=recall,
        tp=counts["tp"],
        fp=counts["fp"],
        tn=counts["tn"],
        fn=counts["fn"],
        f1_arithmetic=(precision + recall) / 2.0,
        f1_macro=f1_macro,
        per_category_f1=per_category,
        degenerate_metrics=degenerate,
        held_out_group=held_out_group,
        predictions=predictions,
    )


@dataclass
class CvReport:
    """Per-fold results with the cross-fold mean and spread of F1."""

    folds: list[FoldResult]
    mean_f1: float
    std_f1: float
    config_fingerprint: str
    plan_fingerprint: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": [f.to_dict() for f in self.folds],
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
            "config_fingerprint": self.config_fingerprint,
            "plan_fingerprint": self.plan_fingerprint,
        }


def aggregate_cv(
    folds: list[FoldResult], config_fingerprint: str, plan_fingerprint: str
) -> CvReport:
    """Mean and sample standard deviation (N-1) of the fold F1 scores."""
    scores = np.array([f.f1 for f in folds], dtype=np.float64)
    mean = float(scores.mean()) if len(scores) else 0.0
    std = float(scores.std(ddof=1)) if len(scores) > 1 else 0.0
    return CvReport(
        folds=folds,
        mean_f1=mean,
        std_f1=std,
        config_fingerprint=config_fingerprint,
        plan_fingerprint=plan_fingerprint,
    )


@dataclass
class RunComparison:
    """Fold-aligned F1 deltas between two reports over the same plan."""

    fold_deltas: list[dict[str, Any]]
    mean_delta: float
    per_category_deltas: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "fold_deltas": self.fold_deltas,
            "mean_delta": self.mean_delta,
            "per_category_deltas": dict(sorted(self.per_category_deltas.items())),
        }


def compare_runs(report_a: CvReport, report_b: CvReport) -> RunComparison:
    """Per-fold and per-category F1 differences, report_b minus report_a."""
    if report_a.plan_fingerprint != report_b.plan_fingerprint:
        raise ValueError("reports were produced from different split plans")
    if len(report_a.folds) != len(report_b.folds):
        raise ValueError("reports have different fold counts")
    fold_deltas = []
    for a, b in zip(report_a.folds, report_b.folds):
        fold_deltas.append(
            {
                "fold_index": a.fold_index,
                "f1_a": a.f1,
                "f1_b": b.f1,
                "delta": b.f1 - a.f1,
                "held_out_group": a.held_out_group,
            }
        )
    categories = set()
    for result in report_a.folds + report_b.folds:
        categories.update(result.per_category_f1)
    per_category = {}
    for category in sorted(categories):
        a_scores = [f.per_category_f1[category] for f in report_a.folds if category in f.per_category_f1]
        b_scores = [f.per_category_f1[category] for f in report_b.folds if category in f.per_category_f1]
        if a_scores and b_scores:
            per_category[category] = float(np.mean(b_scores) - np.mean(a_scores))
    return RunComparison(
        fold_deltas=fold_deltas,
        mean_delta=report_b.mean_f1 - report_a.mean_f1,
        per_category_deltas=per_category,
    )
