"""Split construction and verification for the four regimes."""

import dataclasses

import pytest

from shiftforge.errors import MissingMetadataError, TooFewGroupsError
from shiftforge.manifest import CATEGORY_GEAR_WHEEL, NON_GEAR_CATEGORIES, Manifest
from shiftforge.splits import (
    KIND_ACQUISITION,
    KIND_CATEGORY,
    KIND_FUNCTIONAL_PART,
    KIND_RANDOM,
    FoldAssignment,
    SplitPlan,
    SplitStrategy,
    build_split,
    default_folds,
    load_plan,
    resolve_kind,
    save_plan,
    verify_split,
)

from conftest import make_manifest, make_record


def manifest_with_sides(n_parts=12, per_side=2):
    """Both sides of every part, so the acquisition regime has real work to do."""
    records = []
    index = 0
    for part in range(n_parts):
        for side in ("a", "b"):
            for _ in range(per_side):
                records.append(
                    make_record(
                        index,
                        sample_id=f"s{index:04d}",
                        part_id=f"fp-{part}-{side}",
                        functional_part_id=f"fp-{part}",
                        category=NON_GEAR_CATEGORIES[part % 4],
                        side=side,
                        label="nok" if index % 3 == 0 else "ok",
                    )
                )
                index += 1
    return Manifest(records=records)


def manifest_with_gear(n_per_category=6, gear=4):
    records = []
    index = 0
    for cat_idx, category in enumerate(NON_GEAR_CATEGORIES):
        for _ in range(n_per_category):
            records.append(
                make_record(
                    index,
                    functional_part_id=f"fp-{cat_idx}",
                    part_id=f"fp-{cat_idx}-a",
                    category=category,
                    label="nok" if index % 2 == 0 else "ok",
                )
            )
            index += 1
    for _ in range(gear):
        records.append(
            make_record(
                index,
                functional_part_id="fp-gear",
                part_id="fp-gear-a",
                category=CATEGORY_GEAR_WHEEL,
            )
        )
        index += 1
    return Manifest(records=records)


def test_resolve_kind_shorthand():
    assert resolve_kind("s1") == KIND_RANDOM
    assert resolve_kind("S4") == KIND_CATEGORY
    assert resolve_kind(KIND_FUNCTIONAL_PART) == KIND_FUNCTIONAL_PART
    with pytest.raises(ValueError, match="s9"):
        resolve_kind("s9")


def test_default_folds():
    assert default_folds(KIND_RANDOM) == 5
    assert default_folds(KIND_CATEGORY) == 4


def test_strategy_validation():
    with pytest.raises(ValueError, match="at least 2"):
        SplitStrategy(kind=KIND_RANDOM, folds=1)
    with pytest.raises(ValueError, match="exactly 4"):
        SplitStrategy(kind=KIND_CATEGORY, folds=5)
    with pytest.raises(ValueError, match="unknown"):
        SplitStrategy(kind="s5")


def test_random_split_partitions_actives():
    manifest = make_manifest(30)
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=5, seed=3))
    active = {r.sample_id for r in manifest.active_records()}
    tested = [s for fold in plan.folds for s in fold.test]
    assert sorted(tested) == sorted(active)
    for fold in plan.folds:
        assert set(fold.train) | set(fold.test) == active
        assert not set(fold.train) & set(fold.test)
        assert fold.held_out_group is None


def test_random_split_is_balanced():
    plan = build_split(make_manifest(23), SplitStrategy(kind=KIND_RANDOM, folds=5, seed=0))
    sizes = sorted(len(f.test) for f in plan.folds)
    assert sizes == [4, 4, 5, 5, 5]


def test_build_is_deterministic_and_seed_sensitive():
    manifest = manifest_with_sides()
    strategy = SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=4, seed=11)
    first = build_split(manifest, strategy)
    second = build_split(manifest, strategy)
    assert first == second
    other = build_split(manifest, dataclasses.replace(strategy, seed=12))
    assert other != first


def test_acquisition_split_keeps_part_sides_together():
    manifest = manifest_with_sides()
    plan = build_split(manifest, SplitStrategy(kind=KIND_ACQUISITION, folds=5, seed=2))
    by_id = manifest.by_id()
    for fold in plan.folds:
        train_units = {(by_id[s].functional_part_id, by_id[s].side) for s in fold.train}
        test_units = {(by_id[s].functional_part_id, by_id[s].side) for s in fold.test}
        assert not train_units & test_units


def test_functional_part_split_keeps_parts_together():
    manifest = manifest_with_sides()
    plan = build_split(manifest, SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=5, seed=2))
    by_id = manifest.by_id()
    for fold in plan.folds:
        train_parts = {by_id[s].functional_part_id for s in fold.train}
        test_parts = {by_id[s].functional_part_id for s in fold.test}
        assert not train_parts & test_parts
        # Both sides of a held-out part land in the same fold.
        for part in test_parts:
            sides = {by_id[s].side for s in fold.test if by_id[s].functional_part_id == part}
            assert sides == {"a", "b"}


def test_unequal_groups_bound_fold_spread():
    # Group sizes 1..9 (45 samples); the greedy deal keeps fold sizes within
    # one largest-group of each other.
    records = []
    index = 0
    for part, size in enumerate(range(1, 10)):
        for _ in range(size):
            records.append(
                make_record(
                    index,
                    functional_part_id=f"fp-{part}",
                    part_id=f"fp-{part}-a",
                    category=NON_GEAR_CATEGORIES[part % 4],
                )
            )
            index += 1
    manifest = Manifest(records=records)
    plan = build_split(manifest, SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=3, seed=7))
    sizes = [len(f.test) for f in plan.folds]
    assert sum(sizes) == 45
    assert max(sizes) - min(sizes) <= 9
    assert verify_split(manifest, plan) == []


def test_category_split_fixed_fold_order():
    manifest = manifest_with_gear()
    plan = build_split(manifest, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=0))
    assert [f.held_out_group for f in plan.folds] == list(NON_GEAR_CATEGORIES)
    by_id = manifest.by_id()
    gear_ids = {r.sample_id for r in manifest if r.category == CATEGORY_GEAR_WHEEL}
    for fold in plan.folds:
        assert {by_id[s].category for s in fold.test} == {fold.held_out_group}
        assert gear_ids <= set(fold.train)
    # Seed is irrelevant for the category regime.
    again = build_split(manifest, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=99))
    assert again.folds == plan.folds


def test_category_split_needs_all_categories():
    records = [make_record(i, category=NON_GEAR_CATEGORIES[0], functional_part_id="fp-0", part_id="fp-0-a") for i in range(6)]
    with pytest.raises(TooFewGroupsError, match="non-gear"):
        build_split(Manifest(records=records), SplitStrategy(kind=KIND_CATEGORY, folds=4))


def test_too_few_groups():
    records = [
        make_record(i, functional_part_id="fp-0", part_id="fp-0-a", category=NON_GEAR_CATEGORIES[0])
        for i in range(10)
    ]
    with pytest.raises(TooFewGroupsError, match="found 1"):
        build_split(Manifest(records=records), SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=5))


def test_missing_metadata():
    # Discarded records are skipped, so an empty side there never trips the check.
    manifest = Manifest(
        records=[make_record(i) for i in range(8)] + [make_record(8, label="discard", side="")]
    )
    plan = build_split(manifest, SplitStrategy(kind=KIND_ACQUISITION, folds=2))
    assert verify_split(manifest, plan) == []
    # Manifest construction already rejects empty grouping fields, so reach the
    # builder's own guard by blanking a field after validation.
    mutated = Manifest(records=[make_record(i) for i in range(4)])
    object.__setattr__(mutated.records[2], "side", "")
    with pytest.raises(MissingMetadataError, match="s0002"):
        build_split(mutated, SplitStrategy(kind=KIND_ACQUISITION, folds=2))


def test_discarded_never_assigned():
    manifest = make_manifest(20, nok_every=3)
    manifest = Manifest(records=list(manifest.records) + [make_record(20, label="discard")])
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=4, seed=1))
    assigned = {s for f in plan.folds for s in f.train + f.test}
    assert "s0020" not in assigned


def test_verify_clean_plans_all_regimes():
    sided = manifest_with_sides()
    geared = manifest_with_gear()
    cases = [
        (sided, SplitStrategy(kind=KIND_RANDOM, folds=5, seed=4)),
        (sided, SplitStrategy(kind=KIND_ACQUISITION, folds=5, seed=4)),
        (sided, SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=4, seed=4)),
        (geared, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=4)),
    ]
    for manifest, strategy in cases:
        plan = build_split(manifest, strategy)
        assert verify_split(manifest, plan) == [], strategy.kind


def _rules(violations):
    return {v.rule for v in violations}


def corrupt(plan, fold_index, **changes):
    folds = list(plan.folds)
    folds[fold_index] = dataclasses.replace(folds[fold_index], **changes)
    return SplitPlan(strategy=plan.strategy, folds=tuple(folds))


def test_verify_flags_unknown_sample():
    manifest = make_manifest(20)
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=4, seed=0))
    bad = corrupt(plan, 0, test=plan.folds[0].test + ("ghost-1",))
    assert "unknown_sample" in _rules(verify_split(manifest, bad))


def test_verify_flags_discarded_sample():
    manifest = Manifest(records=[make_record(i) for i in range(12)] + [make_record(12, label="discard")])
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=3, seed=0))
    bad = corrupt(plan, 1, train=plan.folds[1].train + ("s0012",))
    assert "discarded_sample" in _rules(verify_split(manifest, bad))


def test_verify_flags_overlap():
    manifest = make_manifest(20)
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=4, seed=0))
    leak = plan.folds[0].test[0]
    bad = corrupt(plan, 0, train=plan.folds[0].train + (leak,))
    assert "train_test_overlap" in _rules(verify_split(manifest, bad))


def test_verify_flags_group_purity():
    manifest = manifest_with_sides()
    plan = build_split(manifest, SplitStrategy(kind=KIND_FUNCTIONAL_PART, folds=4, seed=0))
    by_id = manifest.by_id()
    # Move one test sample's sibling (same part) into train for the same fold.
    fold = plan.folds[0]
    part = by_id[fold.test[0]].functional_part_id
    sibling = next(s for s in fold.test[1:] if by_id[s].functional_part_id == part)
    bad = corrupt(
        plan,
        0,
        train=plan.folds[0].train + (sibling,),
        test=tuple(s for s in fold.test if s != sibling),
    )
    assert "group_purity" in _rules(verify_split(manifest, bad))


def test_verify_flags_coverage_gaps_and_repeats():
    manifest = make_manifest(20)
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=4, seed=0))
    dropped = plan.folds[2].test[0]
    gap = corrupt(plan, 2, test=tuple(s for s in plan.folds[2].test if s != dropped))
    violations = verify_split(manifest, gap)
    assert any(v.rule == "test_coverage" and "never tested" in v.detail for v in violations)

    repeat = corrupt(plan, 3, test=plan.folds[3].test + (plan.folds[0].test[0],))
    violations = verify_split(manifest, repeat)
    assert any(v.rule == "test_coverage" and "more than one" in v.detail for v in violations)


def test_verify_flags_category_rule_breaks():
    manifest = manifest_with_gear()
    plan = build_split(manifest, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=0))
    gear_id = next(r.sample_id for r in manifest if r.category == CATEGORY_GEAR_WHEEL)

    in_test = corrupt(plan, 0, test=plan.folds[0].test + (gear_id,))
    assert "gear_wheel_in_test" in _rules(verify_split(manifest, in_test))

    out_of_train = corrupt(
        plan, 1, train=tuple(s for s in plan.folds[1].train if s != gear_id)
    )
    assert "gear_wheel_missing_from_train" in _rules(verify_split(manifest, out_of_train))

    relabeled = corrupt(plan, 2, held_out_group=NON_GEAR_CATEGORIES[0])
    rules = _rules(verify_split(manifest, relabeled))
    assert "held_out_categories" in rules or "test_not_held_out_group" in rules

    three_folds = SplitPlan(strategy=plan.strategy, folds=plan.folds[:3])
    assert "fold_count" in _rules(verify_split(manifest, three_folds))


def test_verify_flags_wrong_category_in_test():
    manifest = manifest_with_gear()
    plan = build_split(manifest, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=0))
    intruder = plan.folds[1].test[0]  # belongs to fold 1's category, not fold 0's
    bad = corrupt(plan, 0, test=plan.folds[0].test + (intruder,))
    assert "test_not_held_out_group" in _rules(verify_split(manifest, bad))


def test_violation_str_mentions_fold_and_ids():
    manifest = make_manifest(12)
    plan = build_split(manifest, SplitStrategy(kind=KIND_RANDOM, folds=3))
    bad = corrupt(plan, 0, test=plan.folds[0].test + ("ghost-9",))
    violation_text = str(verify_split(manifest, bad)[0])
    assert "fold 0" in violation_text
    assert "ghost-9" in violation_text


def test_plan_save_load_round_trip(tmp_path):
    manifest = manifest_with_gear()
    plan = build_split(manifest, SplitStrategy(kind=KIND_CATEGORY, folds=4, seed=0))
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    assert load_plan(path) == plan


def test_loaded_plan_verifies_against_manifest(tmp_path):
    manifest = manifest_with_sides()
    plan = build_split(manifest, SplitStrategy(kind=KIND_ACQUISITION, folds=5, seed=9))
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    assert verify_split(manifest, load_plan(path)) == []


def test_fold_assignment_tuple_types():
    plan = build_split(make_manifest(12), SplitStrategy(kind=KIND_RANDOM, folds=3, seed=0))
    for fold in plan.folds:
        assert isinstance(fold, FoldAssignment)
        assert isinstance(fold.train, tuple)
        assert isinstance(fold.test, tuple)
