"""Dataset summary statistics over a manifest."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from .manifest import LABELS, Manifest


@dataclass
class DatasetSummary:
    """Label counts overall and per grouping key, plus class-balance ratios.

    ``ok_fraction`` values are OK / (OK + nOK) over non-discard records;
    groups with no annotated records carry ``None``.
    """

    label_counts: dict[str, int] = field(default_factory=dict)
    per_functional_part: dict[str, dict[str, int]] = field(default_factory=dict)
    per_category: dict[str, dict[str, int]] = field(default_factory=dict)
    ok_fraction_per_functional_part: dict[str, float | None] = field(default_factory=dict)
    ok_fraction_per_category: dict[str, float | None] = field(default_factory=dict)
    total_records: int = 0
    total_annotated: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "label_counts": dict(self.label_counts),
            "per_functional_part": {k: dict(v) for k, v in self.per_functional_part.items()},
            "per_category": {k: dict(v) for k, v in self.per_category.items()},
            "ok_fraction_per_functional_part": dict(self.ok_fraction_per_functional_part),
            "ok_fraction_per_category": dict(self.ok_fraction_per_category),
            "total_records": self.total_records,
            "total_annotated": self.total_annotated,
        }


def _ok_fraction(counts: dict[str, int]) -> float | None:
    annotated = counts.get("ok", 0) + counts.get("nok", 0)
    if annotated == 0:
        return None
    return counts.get("ok", 0) / annotated


def summarize(manifest: Manifest) -> DatasetSummary:
    """Count labels overall and per functional part / category.

    Group totals always sum back to the manifest totals; an empty manifest
    yields an all-zero summary.
    """
    label_counts: Counter[str] = Counter({label: 0 for label in LABELS})
    per_part: dict[str, Counter[str]] = {}
    per_category: dict[str, Counter[str]] = {}
    for record in manifest.records:
        label_counts[record.label] += 1
        if record.functional_part_id:
            per_part.setdefault(record.functional_part_id, Counter())[record.label] += 1
        if record.category:
            per_category.setdefault(record.category, Counter())[record.label] += 1

    summary = DatasetSummary(
        label_counts=dict(label_counts),
        per_functional_part={k: dict(v) for k, v in sorted(per_part.items())},
        per_category={k: dict(v) for k, v in sorted(per_category.items())},
        ok_fraction_per_functional_part={k: _ok_fraction(v) for k, v in sorted(per_part.items())},
        ok_fraction_per_category={k: _ok_fraction(v) for k, v in sorted(per_category.items())},
        total_records=len(manifest.records),
        total_annotated=label_counts["ok"] + label_counts["nok"],
    )
    return summary
