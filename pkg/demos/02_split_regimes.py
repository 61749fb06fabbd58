"""The four split regimes, from optimistic to honest.

The same manifest is dealt four ways. Random splitting scatters the
sides of one part across train and test, so the model meets familiar
parts at test time. Acquisition splitting keeps each recorded side
together. Part splitting keeps whole functional parts together. Category
splitting holds out an entire part group per fold, which is the regime
that exposes distribution shift.

Every plan is re-checked by the independent verifier, and at the end a
plan is corrupted on purpose to show what the verifier reports.
"""

import dataclasses

from shiftforge.splits import (
    STRATEGY_KINDS,
    SplitPlan,
    SplitStrategy,
    build_split,
    default_folds,
    verify_split,
)
from shiftforge.synth import SynthConfig, generate_dataset

dataset = generate_dataset(SynthConfig(n_samples=240, image_size=16, seed=5))
manifest = dataset.manifest()
by_id = manifest.by_id()

for kind in STRATEGY_KINDS:
    strategy = SplitStrategy(kind=kind, folds=default_folds(kind), seed=11)
    plan = build_split(manifest, strategy)
    violations = verify_split(manifest, plan)
    sizes = ", ".join(str(len(fold.test)) for fold in plan.folds)
    print(f"{kind}: {len(plan.folds)} folds, test sizes [{sizes}], "
          f"{len(violations)} violations")

    if kind == "category_s4":
        for fold in plan.folds:
            train_categories = sorted({by_id[s].category for s in fold.train})
            print(f"  fold {fold.fold_index} tests {fold.held_out_group}, "
                  f"trains on {train_categories}")
    print()

# The verifier is independent of the builder, so a hand-edited plan gets
# caught. Move one test sample into train as well: leakage.
plan = build_split(manifest, SplitStrategy(kind="functional_part_s3", folds=5, seed=11))
leaked = plan.folds[0].test[0]
folds = list(plan.folds)
folds[0] = dataclasses.replace(folds[0], train=folds[0].train + (leaked,))
broken = SplitPlan(strategy=plan.strategy, folds=tuple(folds))

print(f"after moving {leaked} into fold 0's training set as well:")
for violation in verify_split(manifest, broken):
    print(f"  {violation}")
