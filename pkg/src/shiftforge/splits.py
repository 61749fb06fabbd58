"""Cross-validation split construction for the four shift regimes.

Strategies, ordered by severity of the induced train/test shift:

* ``random_s1``      - every sample is its own grouping unit
* ``acquisition_s2`` - grouped by (functional_part_id, side)
* ``functional_part_s3`` - grouped by functional_part_id
* ``category_s4``    - leave-one-category-out over the four non-gear
  categories; gear wheel samples sit in every fold's training set and are
  never tested

Plans are serializable so externally published fold files can be loaded
verbatim instead of regenerated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import MissingMetadataError, TooFewGroupsError
from .ioutils import read_json, write_json
from .manifest import CATEGORY_GEAR_WHEEL, NON_GEAR_CATEGORIES, Manifest, SampleRecord

KIND_RANDOM = "random_s1"
KIND_ACQUISITION = "acquisition_s2"
KIND_FUNCTIONAL_PART = "functional_part_s3"
KIND_CATEGORY = "category_s4"
STRATEGY_KINDS = (KIND_RANDOM, KIND_ACQUISITION, KIND_FUNCTIONAL_PART, KIND_CATEGORY)

_SHORTHAND = {"s1": KIND_RANDOM, "s2": KIND_ACQUISITION, "s3": KIND_FUNCTIONAL_PART, "s4": KIND_CATEGORY}


def resolve_kind(name: str) -> str:
    """Accept either the full kind name or the s1..s4 shorthand."""
    lowered = name.lower()
    if lowered in _SHORTHAND:
        return _SHORTHAND[lowered]
    if lowered in STRATEGY_KINDS:
        return lowered
    raise ValueError(f"unknown split strategy '{name}'")


def default_folds(kind: str) -> int:
    return 4 if kind == KIND_CATEGORY else 5


@dataclass(frozen=True)
class SplitStrategy:
    kind: str
    folds: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown split strategy '{self.kind}'")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.kind == KIND_CATEGORY and self.folds != 4:
            raise ValueError("the category strategy uses exactly 4 folds")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "folds": self.folds, "seed": self.seed}

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "SplitStrategy":
        return cls(kind=row["kind"], folds=int(row["folds"]), seed=int(row["seed"]))


@dataclass(frozen=True)
class FoldAssignment:
    fold_index: int
    train: tuple[str, ...]
    test: tuple[str, ...]
    held_out_group: str | None = None


@dataclass(frozen=True)
class SplitPlan:
    strategy: SplitStrategy
    folds: tuple[FoldAssignment, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy.to_dict(),
            "folds": [
                {
                    "fold_index": f.fold_index,
                    "train": list(f.train),
                    "test": list(f.test),
                    "held_out_group": f.held_out_group,
                }
                for f in self.folds
            ],
        }

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "SplitPlan":
        strategy = SplitStrategy.from_dict(row["strategy"])
        folds = tuple(
            FoldAssignment(
                fold_index=int(f["fold_index"]),
                train=tuple(f["train"]),
                test=tuple(f["test"]),
                held_out_group=f.get("held_out_group"),
            )
            for f in row["folds"]
        )
        return cls(strategy=strategy, folds=folds)


@dataclass(frozen=True)
class Violation:
    """One broken plan invariant; violations are data, not exceptions."""

    rule: str
    detail: str
    fold_index: int | None = None
    sample_ids: tuple[str, ...] = ()

    def __str__(self) -> str:
        where = f"fold {self.fold_index}" if self.fold_index is not None else "plan"
        ids = f" [{', '.join(self.sample_ids[:5])}{'...' if len(self.sample_ids) > 5 else ''}]" if self.sample_ids else ""
        return f"{where}: {self.rule}: {self.detail}{ids}"


def _group_key(kind: str) -> Callable[[SampleRecord], tuple[str, ...]]:
    if kind == KIND_RANDOM:
        return lambda r: (r.sample_id,)
    if kind == KIND_ACQUISITION:
        return lambda r: (r.functional_part_id, r.side)
    if kind == KIND_FUNCTIONAL_PART:
        return lambda r: (r.functional_part_id,)
    return lambda r: (r.category,)


_GROUP_FIELDS = {
    KIND_ACQUISITION: ("functional_part_id", "side"),
    KIND_FUNCTIONAL_PART: ("functional_part_id",),
    KIND_CATEGORY: ("category",),
}


def build_split(manifest: Manifest, strategy: SplitStrategy) -> SplitPlan:
    """Deterministically resolve a strategy into fold assignments.

    Grouping units are shuffled by a generator seeded from the strategy and
    dealt, in that order, each to the currently smallest test fold (ties go
    to the lower fold index). With equal-sized units this is a plain
    round-robin deal; with unequal units it bounds the fold-size spread by
    one unit's sample count. The category strategy instead holds out each
    non-gear category once, in a fixed canonical order.
    """
    active = manifest.active_records()
    required = _GROUP_FIELDS.get(strategy.kind, ())
    for record in active:
        for name in required:
            if not getattr(record, name):
                raise MissingMetadataError(
                    f"record '{record.sample_id}' lacks '{name}' required by {strategy.kind}"
                )

    if strategy.kind == KIND_CATEGORY:
        return _build_category_split(active, strategy)

    key_of = _group_key(strategy.kind)
    groups: dict[tuple[str, ...], list[str]] = {}
    for record in active:
        groups.setdefault(key_of(record), []).append(record.sample_id)
    if len(groups) < strategy.folds:
        raise TooFewGroupsError(
            f"{strategy.kind} needs at least {strategy.folds} grouping units, found {len(groups)}"
        )

    keys = sorted(groups)
    rng = np.random.default_rng(np.random.SeedSequence(strategy.seed))
    order = rng.permutation(len(keys))

    all_ids = sorted(r.sample_id for r in active)
    fold_test: list[list[str]] = [[] for _ in range(strategy.folds)]
    fold_sizes = [0] * strategy.folds
    for position in order:
        members = groups[keys[position]]
        target = min(range(strategy.folds), key=lambda f: (fold_sizes[f], f))
        fold_test[target].extend(members)
        fold_sizes[target] += len(members)

    folds = []
    for index in range(strategy.folds):
        test = set(fold_test[index])
        train = tuple(s for s in all_ids if s not in test)
        folds.append(
            FoldAssignment(fold_index=index, train=train, test=tuple(sorted(test)))
        )
    return SplitPlan(strategy=strategy, folds=tuple(folds))


def _build_category_split(active: list[SampleRecord], strategy: SplitStrategy) -> SplitPlan:
    by_category: dict[str, list[str]] = {}
    for record in active:
        by_category.setdefault(record.category, []).append(record.sample_id)
    present = [c for c in NON_GEAR_CATEGORIES if by_category.get(c)]
    if len(present) < len(NON_GEAR_CATEGORIES):
        raise TooFewGroupsError(
            f"{strategy.kind} needs all {len(NON_GEAR_CATEGORIES)} non-gear categories "
            f"present, found {len(present)}"
        )
    all_ids = sorted(r.sample_id for r in active)
    folds = []
    for index, category in enumerate(NON_GEAR_CATEGORIES):
        test = set(by_category[category])
        train = tuple(s for s in all_ids if s not in test)
        folds.append(
            FoldAssignment(
                fold_index=index,
                train=train,
                test=tuple(sorted(test)),
                held_out_group=category,
            )
        )
    return SplitPlan(strategy=strategy, folds=tuple(folds))


def verify_split(manifest: Manifest, plan: SplitPlan) -> list[Violation]:
    """Re-check every plan invariant; an empty list means the plan is sound.

    Checks the shared invariants (known ids, no discarded ids, fold
    disjointness), the per-strategy group purity, exactly-once test coverage
    for the non-category strategies, and the category strategy's held-out
    bookkeeping including the gear wheel rule.
    """
    violations: list[Violation] = []
    by_id = manifest.by_id()
    active_ids = {r.sample_id for r in manifest.active_records()}
    kind = plan.strategy.kind
    key_of = _group_key(kind)

    for fold in plan.folds:
        for side_name, ids in (("train", fold.train), ("test", fold.test)):
            unknown = sorted(s for s in ids if s not in by_id)
            if unknown:
                violations.append(
                    Violation(
                        rule="unknown_sample",
                        detail=f"{len(unknown)} {side_name} ids not in the manifest",
                        fold_index=fold.fold_index,
                        sample_ids=tuple(unknown),
                    )
                )
            discarded = sorted(s for s in ids if s in by_id and by_id[s].is_discard())
            if discarded:
                violations.append(
                    Violation(
                        rule="discarded_sample",
                        detail=f"{len(discarded)} discarded ids in the {side_name} set",
                        fold_index=fold.fold_index,
                        sample_ids=tuple(discarded),
                    )
                )
        overlap = sorted(set(fold.train) & set(fold.test))
        if overlap:
            violations.append(
                Violation(
                    rule="train_test_overlap",
                    detail=f"{len(overlap)} ids in both train and test",
                    fold_index=fold.fold_index,
                    sample_ids=tuple(overlap),
                )
            )
        if kind != KIND_RANDOM:
            train_groups: dict[tuple[str, ...], list[str]] = {}
            for s in fold.train:
                if s in by_id:
                    train_groups.setdefault(key_of(by_id[s]), []).append(s)
            for s in fold.test:
                if s in by_id and key_of(by_id[s]) in train_groups:
                    group = key_of(by_id[s])
                    violations.append(
                        Violation(
                            rule="group_purity",
                            detail=f"grouping unit {group} straddles train and test",
                            fold_index=fold.fold_index,
                            sample_ids=tuple(sorted([s] + train_groups[group][:4])),
                        )
                    )

    if kind == KIND_CATEGORY:
        violations.extend(_verify_category_rules(manifest, plan, active_ids))
    else:
        counts: dict[str, int] = {s: 0 for s in active_ids}
        for fold in plan.folds:
            for s in fold.test:
                if s in counts:
                    counts[s] += 1
        missing = sorted(s for s, c in counts.items() if c == 0)
        if missing:
            violations.append(
                Violation(
                    rule="test_coverage",
                    detail=f"{len(missing)} active samples never tested",
                    sample_ids=tuple(missing),
                )
            )
        repeated = sorted(s for s, c in counts.items() if c > 1)
        if repeated:
            violations.append(
                Violation(
                    rule="test_coverage",
                    detail=f"{len(repeated)} samples tested in more than one fold",
                    sample_ids=tuple(repeated),
                )
            )
    return violations


def _verify_category_rules(
    manifest: Manifest, plan: SplitPlan, active_ids: set[str]
) -> list[Violation]:
    violations: list[Violation] = []
    by_id = manifest.by_id()
    if len(plan.folds) != 4:
        violations.append(
            Violation(rule="fold_count", detail=f"expected 4 folds, found {len(plan.folds)}")
        )
    held = [f.held_out_group for f in plan.folds]
    if sorted(h for h in held if h) != sorted(NON_GEAR_CATEGORIES) or None in held:
        violations.append(
            Violation(
                rule="held_out_categories",
                detail=f"held-out groups {held} are not a permutation of {list(NON_GEAR_CATEGORIES)}",
            )
        )
    gear_ids = {
        s for s in active_ids if by_id[s].category == CATEGORY_GEAR_WHEEL
    }
    for fold in plan.folds:
        gear_in_test = sorted(set(fold.test) & gear_ids)
        if gear_in_test:
            violations.append(
                Violation(
                    rule="gear_wheel_in_test",
                    detail=f"{len(gear_in_test)} gear wheel ids in the test set",
                    fold_index=fold.fold_index,
                    sample_ids=tuple(gear_in_test),
                )
            )
        gear_missing = sorted(gear_ids - set(fold.train))
        if gear_missing:
            violations.append(
                Violation(
                    rule="gear_wheel_missing_from_train",
                    detail=f"{len(gear_missing)} gear wheel ids absent from the train set",
                    fold_index=fold.fold_index,
                    sample_ids=tuple(gear_missing),
                )
            )
        if fold.held_out_group:
            off_group = sorted(
                s
                for s in fold.test
                if s in by_id and by_id[s].category != fold.held_out_group
            )
            if off_group:
                violations.append(
                    Violation(
                        rule="test_not_held_out_group",
                        detail=f"{len(off_group)} test ids outside category '{fold.held_out_group}'",
                        fold_index=fold.fold_index,
                        sample_ids=tuple(off_group),
                    )
                )
    return violations


def save_plan(plan: SplitPlan, path: str | Path) -> None:
    write_json(path, plan.to_dict())


def load_plan(path: str | Path) -> SplitPlan:
    return SplitPlan.from_dict(read_json(path))
