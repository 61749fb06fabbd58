"""Synthetic benchmark generator."""

import numpy as np
import pytest

from shiftforge.manifest import NON_GEAR_CATEGORIES, load_manifest
from shiftforge.splits import SplitStrategy, build_split, verify_split
from shiftforge.synth import (
    SynthConfig,
    benchmark_train_config,
    generate_dataset,
    save_dataset,
    with_seed,
)
from shiftforge.training import ArrayDataset


def test_config_validation():
    with pytest.raises(ValueError, match="per group"):
        SynthConfig(n_samples=2)
    with pytest.raises(ValueError, match="image_size"):
        SynthConfig(image_size=4)
    with pytest.raises(ValueError, match="entries"):
        SynthConfig(nok_fraction_per_group=(0.5, 0.5))
    with pytest.raises(ValueError, match="outside"):
        SynthConfig(nok_fraction_per_group=(0.5, 0.5, 0.5, 1.2))
    with pytest.raises(ValueError, match="parts_per_group"):
        SynthConfig(parts_per_group=0)


def test_shapes_and_range(synth_small):
    assert synth_small.images.shape == (240, 32, 32, 3)
    assert synth_small.images.dtype == np.float32
    assert synth_small.images.min() >= 0.0
    assert synth_small.images.max() <= 1.0
    assert len(synth_small.records) == 240


def test_group_sizes_and_fractions(synth_small):
    per_group = {}
    for record in synth_small.records:
        per_group.setdefault(record.category, []).append(record.label)
    assert set(per_group) == set(NON_GEAR_CATEGORIES)
    for group_index, category in enumerate(NON_GEAR_CATEGORIES):
        labels = per_group[category]
        assert len(labels) == 60
        nok = sum(label == "nok" for label in labels)
        fraction = SynthConfig().nok_fraction_per_group[group_index]
        assert nok == round(fraction * 60)


def test_determinism_and_seed_sensitivity():
    config = SynthConfig(n_samples=40, seed=9)
    first = generate_dataset(config)
    second = generate_dataset(config)
    np.testing.assert_array_equal(first.images, second.images)
    assert first.records == second.records
    shifted = generate_dataset(with_seed(config, 10))
    assert not np.array_equal(first.images, shifted.images)
    assert shifted.config.seed == 10


def test_manifest_is_valid_and_splittable(synth_small):
    manifest = synth_small.manifest()
    assert len(manifest) == 240
    plan = build_split(manifest, SplitStrategy(kind="category_s4", folds=4))
    assert verify_split(manifest, plan) == []
    plan3 = build_split(manifest, SplitStrategy(kind="functional_part_s3", folds=5, seed=1))
    assert verify_split(manifest, plan3) == []


def test_parts_and_sides_structure(synth_small):
    for record in synth_small.records:
        assert record.functional_part_id.startswith(record.category)
        assert record.part_id == f"{record.functional_part_id}-{record.side}"
        assert record.side in ("a", "b")
    # 25 parts per group, 60 samples per group: parts repeat across sides.
    parts = {
        r.functional_part_id
        for r in synth_small.records
        if r.category == NON_GEAR_CATEGORIES[0]
    }
    assert len(parts) == 25


def test_nok_images_are_brighter_on_average(synth_small):
    # The scratch motif adds brightness, so class means must separate.
    means = {"ok": [], "nok": []}
    for image, record in zip(synth_small.images, synth_small.records):
        means[record.label].append(float(image.mean()))
    assert np.mean(means["nok"]) > np.mean(means["ok"])


def test_save_round_trip(tmp_path, synth_small):
    manifest_path = save_dataset(synth_small, tmp_path)
    assert manifest_path == tmp_path / "manifest.jsonl"
    manifest = load_manifest(manifest_path)
    assert len(manifest) == 240
    data = ArrayDataset.from_manifest(manifest, tmp_path)
    assert data.images.shape == synth_small.images.shape
    # PNG quantization to 8 bits is the only loss.
    assert np.abs(data.images - synth_small.images).max() <= (0.5 / 255.0) + 1e-6


def test_benchmark_train_config_knobs():
    reg = benchmark_train_config(alpha=0.2, seed=3)
    base = benchmark_train_config(alpha=0.0, seed=3)
    assert reg.regularization.alpha == 0.2
    assert base.regularization.alpha == 0.0
    assert reg.seed == 3
    # Everything else is pinned so comparisons vary one factor at a time.
    assert base.to_dict()["backbone_options"] == reg.to_dict()["backbone_options"]
    assert base.epochs == reg.epochs
    assert base.learning_rate == reg.learning_rate
    assert reg.backbone == "small_cnn"


def test_config_to_dict_round_trips_by_fields():
    config = SynthConfig(n_samples=48, seed=2)
    payload = config.to_dict()
    assert payload["n_samples"] == 48
    assert payload["nok_fraction_per_group"] == [0.8, 0.65, 0.35, 0.2]
    assert SynthConfig(**{**payload, "nok_fraction_per_group": tuple(payload["nok_fraction_per_group"])}) == config
