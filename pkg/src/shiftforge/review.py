"""Annotation-review loop: queue building and decision application.

Model outputs point at samples worth a second look, either because the
prediction disagrees with the stored label or because the model is
unsure. A human works through the queue and records keep, flip, or
discard decisions; applying those decisions produces a revised manifest
while the original stays untouched.
"""

from __future__ import annotations

import dataclasses
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .errors import ReviewError
from .ioutils import append_jsonl, iter_jsonl, write_jsonl
from .manifest import LABEL_DISCARD, LABEL_NOK, LABEL_OK, Manifest
from .metrics import SamplePrediction

MODE_MISCLASSIFIED = "misclassified"
MODE_LOW_CONFIDENCE = "low_confidence"
REVIEW_MODES = (MODE_MISCLASSIFIED, MODE_LOW_CONFIDENCE)

ACTION_KEEP = "keep"
ACTION_FLIP = "flip"
ACTION_DISCARD = "discard"
ACTIONS = (ACTION_KEEP, ACTION_FLIP, ACTION_DISCARD)

DEFAULT_CONFIDENCE_THRESHOLD = 0.75

_FLIPPED = {LABEL_OK: LABEL_NOK, LABEL_NOK: LABEL_OK}


@dataclass(frozen=True)
class ReviewItem:
    """One queue entry: what the model thinks about one labeled sample."""

    sample_id: str
    image_path: str
    current_label: str
    model_prediction: str
    confidence: float
    reason: str
    fold_index: int

    def __post_init__(self) -> None:
        if self.reason not in REVIEW_MODES:
            raise ValueError(f"unknown review reason '{self.reason}'")
        if self.reason == MODE_MISCLASSIFIED and self.model_prediction == self.current_label:
            raise ValueError(
                f"{self.sample_id}: misclassified item with matching prediction and label"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"{self.sample_id}: confidence {self.confidence} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "image_path": self.image_path,
            "current_label": self.current_label,
            "model_prediction": self.model_prediction,
            "confidence": self.confidence,
            "reason": self.reason,
            "fold_index": self.fold_index,
        }

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "ReviewItem":
        return cls(
            sample_id=row["sample_id"],
            image_path=row["image_path"],
            current_label=row["current_label"],
            model_prediction=row["model_prediction"],
            confidence=float(row["confidence"]),
            reason=row["reason"],
            fold_index=int(row["fold_index"]),
        )


@dataclass(frozen=True)
class ReviewDecision:
    """A reviewer's verdict on one sample."""

    sample_id: str
    action: str
    reviewer_id: str = "anonymous"
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown review action '{self.action}'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "action": self.action,
            "reviewer_id": self.reviewer_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "ReviewDecision":
        return cls(
            sample_id=row["sample_id"],
            action=row["action"],
            reviewer_id=row.get("reviewer_id", "anonymous"),
            timestamp=float(row.get("timestamp", 0.0)),
        )

    @classmethod
    def now(cls, sample_id: str, action: str, reviewer_id: str = "anonymous") -> "ReviewDecision":
        return cls(
            sample_id=sample_id,
            action=action,
            reviewer_id=reviewer_id,
            timestamp=time.time(),
        )


def ensemble_predictions(runs: list[list[SamplePrediction]]) -> list[SamplePrediction]:
    """Average defect probabilities over several runs, per sample.

    All runs must cover the same sample ids; fold indices are taken from
    the first run. With a single run this is the identity.
    """
    if not runs:
        raise ValueError("no prediction runs given")
    if len(runs) == 1:
        return list(runs[0])
    reference = {p.sample_id: p for p in runs[0]}
    sums = {p.sample_id: p.prob_nok for p in runs[0]}
    for run in runs[1:]:
        ids = {p.sample_id for p in run}
        if ids != set(reference):
            raise ValueError("prediction runs cover different sample ids")
        for p in run:
            sums[p.sample_id] += p.prob_nok
    return [
        dataclasses.replace(p, prob_nok=sums[p.sample_id] / len(runs))
        for p in runs[0]
    ]


def build_review_queue(
    predictions: Iterable[SamplePrediction],
    manifest: Manifest,
    mode: str,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
) -> list[ReviewItem]:
    """Select samples worth reviewing, hardest (least confident) first.

    misclassified mode picks exactly the samples whose prediction
    disagrees with the stored label; low_confidence mode picks exactly
    those with confidence strictly below the threshold, right or wrong.
    Predictions on discarded records are skipped. Unknown sample ids
    raise ReviewError.
    """
    if mode not in REVIEW_MODES:
        raise ValueError(f"mode must be one of {REVIEW_MODES}, got '{mode}'")
    if mode == MODE_LOW_CONFIDENCE and not 0.5 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0.5, 1], got {threshold}")

    by_id = manifest.by_id()
    items: list[ReviewItem] = []
    for prediction in predictions:
        record = by_id.get(prediction.sample_id)
        if record is None:
            raise ReviewError(f"prediction references unknown sample_id '{prediction.sample_id}'")
        if record.label == LABEL_DISCARD:
            continue
        if mode == MODE_MISCLASSIFIED:
            if prediction.predicted_label == record.label:
                continue
        elif prediction.confidence >= threshold:
            continue
        items.append(
            ReviewItem(
                sample_id=record.sample_id,
                image_path=record.image_path,
                current_label=record.label,
                model_prediction=prediction.predicted_label,
                confidence=prediction.confidence,
                reason=mode,
                fold_index=prediction.fold_index,
            )
        )
    items.sort(key=lambda item: (item.confidence, item.sample_id))
    return items


def save_queue(items: list[ReviewItem], path: str | Path) -> None:
    write_jsonl(path, [item.to_dict() for item in items])


def load_queue(path: str | Path) -> list[ReviewItem]:
    return [ReviewItem.from_dict(row) for _, row in iter_jsonl(path)]


def append_decision(decision: ReviewDecision, path: str | Path) -> None:
    """Append one decision to the JSON-lines decisions file."""
    append_jsonl(path, decision.to_dict())


def load_decisions(path: str | Path) -> list[ReviewDecision]:
    path = Path(path)
    if not path.exists():
        return []
    return [ReviewDecision.from_dict(row) for _, row in iter_jsonl(path)]


def effective_decisions(decisions: Iterable[ReviewDecision]) -> dict[str, ReviewDecision]:
    """Latest decision per sample_id; list order breaks timestamp ties."""
    effective: dict[str, ReviewDecision] = {}
    for decision in decisions:
        current = effective.get(decision.sample_id)
        if current is None or decision.timestamp >= current.timestamp:
            effective[decision.sample_id] = decision
    return effective


@dataclass
class ApplyResult:
    """Revised manifest plus what changed and what was refused."""

    manifest: Manifest
    changes: list[dict[str, str]]
    warnings: list[str]


def apply_decisions(manifest: Manifest, decisions: Iterable[ReviewDecision]) -> ApplyResult:
    """Produce a revised manifest from review decisions.

    keep leaves a record alone, flip toggles the two class labels,
    discard marks the record discarded without deleting it. A flip on an
    already-discarded record is refused with a warning. The input
    manifest is not modified; the change-log lists old and new label per
    affected sample in manifest order.
    """
    effective = effective_decisions(decisions)
    known = {record.sample_id for record in manifest.records}
    unknown = sorted(set(effective) - known)
    if unknown:
        raise ReviewError(f"decisions reference unknown sample_ids: {unknown[:5]}")

    revised = []
    changes: list[dict[str, str]] = []
    notes: list[str] = []
    for record in manifest.records:
        decision = effective.get(record.sample_id)
        if decision is None or decision.action == ACTION_KEEP:
            revised.append(record)
            continue
        if decision.action == ACTION_FLIP:
            if record.label == LABEL_DISCARD:
                message = f"{record.sample_id}: flip on a discarded record refused"
                warnings.warn(message, stacklevel=2)
                notes.append(message)
                revised.append(record)
                continue
            new_label = _FLIPPED[record.label]
        else:
            new_label = LABEL_DISCARD
        if new_label == record.label:
            revised.append(record)
            continue
        revised.append(dataclasses.replace(record, label=new_label))
        changes.append(
            {
                "sample_id": record.sample_id,
                "old_label": record.label,
                "new_label": new_label,
                "action": decision.action,
            }
        )

    return ApplyResult(
        manifest=Manifest(records=revised, schema_version=manifest.schema_version),
        changes=changes,
        warnings=notes,
    )
