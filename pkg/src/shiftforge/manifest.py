"""Manifest schema for annotated image patches.

A manifest is a UTF-8 JSON-lines file, one sample record per line, with an
optional leading meta line carrying the schema version. Records labelled
``discard`` stay in the file (so review decisions are reversible) but are
excluded from training and evaluation everywhere downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import ManifestIntegrityError, ManifestParseError, ManifestSchemaError
from .ioutils import atomic_write_text

SCHEMA_VERSION = 1
MANIFEST_META_KEY = "__manifest_meta__"

LABEL_OK = "ok"
LABEL_NOK = "nok"
LABEL_DISCARD = "discard"
LABELS = (LABEL_OK, LABEL_NOK, LABEL_DISCARD)

CATEGORY_GEAR_WHEEL = "gear_wheel"
CATEGORIES = (
    CATEGORY_GEAR_WHEEL,
    "synchronizer_ring_cone",
    "synchronizer_body",
    "synchronizer_collar",
    "spline",
)
NON_GEAR_CATEGORIES = tuple(c for c in CATEGORIES if c != CATEGORY_GEAR_WHEEL)

TRANSMISSIONS = ("automatic", "manual")
SIDES = ("a", "b")

_REQUIRED_FIELDS = (
    "sample_id",
    "image_path",
    "label",
    "part_id",
    "functional_part_id",
    "category",
    "transmission",
    "side",
)
_GROUPING_FIELDS = ("part_id", "functional_part_id", "category", "transmission", "side")


@dataclass(frozen=True)
class SampleRecord:
    """One annotated image patch with its grouping metadata."""

    sample_id: str
    image_path: str
    label: str
    part_id: str
    functional_part_id: str
    category: str
    transmission: str
    side: str
    patch_origin: tuple[int, int] | None = None

    def to_dict(self) -> dict[str, Any]:
        row: dict[str, Any] = {
            "sample_id": self.sample_id,
            "image_path": self.image_path,
            "label": self.label,
            "part_id": self.part_id,
            "functional_part_id": self.functional_part_id,
            "category": self.category,
            "transmission": self.transmission,
            "side": self.side,
        }
        if self.patch_origin is not None:
            row["patch_origin"] = list(self.patch_origin)
        return row

    @classmethod
    def from_dict(cls, row: dict[str, Any], line_number: int | None = None) -> "SampleRecord":
        for name in _REQUIRED_FIELDS:
            if name not in row:
                raise ManifestSchemaError(f"missing field '{name}'", line_number)
            if not isinstance(row[name], str):
                raise ManifestSchemaError(f"field '{name}' must be a string", line_number)
        label = row["label"]
        if label not in LABELS:
            raise ManifestSchemaError(
                f"unknown label '{label}' (expected one of {', '.join(LABELS)})", line_number
            )
        category = row["category"]
        if category and category not in CATEGORIES:
            raise ManifestSchemaError(f"unknown category '{category}'", line_number)
        transmission = row["transmission"]
        if transmission and transmission not in TRANSMISSIONS:
            raise ManifestSchemaError(f"unknown transmission '{transmission}'", line_number)
        side = row["side"]
        if side and side not in SIDES:
            raise ManifestSchemaError(f"unknown side '{side}'", line_number)
        origin = row.get("patch_origin")
        patch_origin: tuple[int, int] | None = None
        if origin is not None:
            if (
                not isinstance(origin, (list, tuple))
                or len(origin) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in origin)
            ):
                raise ManifestSchemaError(
                    "patch_origin must be a pair of integer pixel coordinates", line_number
                )
            patch_origin = (origin[0], origin[1])
        return cls(
            sample_id=row["sample_id"],
            image_path=row["image_path"],
            label=label,
            part_id=row["part_id"],
            functional_part_id=row["functional_part_id"],
            category=category,
            transmission=transmission,
            side=side,
            patch_origin=patch_origin,
        )

    def is_discard(self) -> bool:
        return self.label == LABEL_DISCARD


@dataclass
class Manifest:
    """Ordered collection of sample records plus the schema version."""

    records: list[SampleRecord] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        validate_records(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def active_records(self) -> list[SampleRecord]:
        """Records that take part in training and evaluation."""
        return [r for r in self.records if not r.is_discard()]

    def by_id(self) -> dict[str, SampleRecord]:
        return {r.sample_id: r for r in self.records}

    def functional_part_categories(self) -> dict[str, str]:
        """Map from functional part id to its (single) category."""
        mapping: dict[str, str] = {}
        for record in self.records:
            if record.functional_part_id:
                mapping.setdefault(record.functional_part_id, record.category)
        return mapping


def validate_records(
    records: Iterable[SampleRecord], line_numbers: dict[str, int] | None = None
) -> None:
    """Check cross-record invariants, raising on the first violation.

    ``line_numbers`` maps sample_id to source line for error reporting when
    the records came from a file.
    """

    def line_of(sample_id: str) -> int | None:
        return line_numbers.get(sample_id) if line_numbers else None

    seen: set[str] = set()
    part_category: dict[str, str] = {}
    for record in records:
        if record.sample_id in seen:
            raise ManifestIntegrityError(
                f"duplicate sample_id '{record.sample_id}'", line_of(record.sample_id)
            )
        seen.add(record.sample_id)
        if not record.is_discard():
            for name in _GROUPING_FIELDS:
                if not getattr(record, name):
                    raise ManifestIntegrityError(
                        f"record '{record.sample_id}' has empty grouping field '{name}'",
                        line_of(record.sample_id),
                    )
        if record.functional_part_id:
            previous = part_category.setdefault(record.functional_part_id, record.category)
            if previous != record.category:
                raise ManifestIntegrityError(
                    f"functional_part_id '{record.functional_part_id}' appears under "
                    f"categories '{previous}' and '{record.category}'",
                    line_of(record.sample_id),
                )


def load_manifest(path: str | Path) -> Manifest:
    """Read and validate a JSON-lines manifest.

    Raises ManifestParseError, ManifestSchemaError or ManifestIntegrityError
    with the offending line number on the first violation found.
    """
    path = Path(path)
    records: list[SampleRecord] = []
    line_numbers: dict[str, int] = {}
    schema_version = SCHEMA_VERSION
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(f"malformed JSON ({exc.msg})", number) from exc
            if not isinstance(row, dict):
                raise ManifestParseError("each line must be a JSON object", number)
            if row.get(MANIFEST_META_KEY):
                version = row.get("schema_version", SCHEMA_VERSION)
                if not isinstance(version, int):
                    raise ManifestSchemaError("schema_version must be an integer", number)
                schema_version = version
                continue
            record = SampleRecord.from_dict(row, line_number=number)
            if record.sample_id not in line_numbers:
                line_numbers[record.sample_id] = number
            records.append(record)
    validate_records(records, line_numbers)
    return Manifest(records=records, schema_version=schema_version)


def serialize_manifest(manifest: Manifest) -> str:
    lines = [
        json.dumps(
            {MANIFEST_META_KEY: True, "schema_version": manifest.schema_version},
            sort_keys=True,
        )
    ]
    lines.extend(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) for r in manifest.records)
    return "\n".join(lines) + "\n"


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Whole-file atomic write (temp file, then rename)."""
    atomic_write_text(path, serialize_manifest(manifest))
