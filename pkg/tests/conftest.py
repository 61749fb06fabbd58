"""Shared fixtures: small manifests and a cached synthetic dataset."""

from __future__ import annotations

import numpy as np
import pytest

from shiftforge.manifest import NON_GEAR_CATEGORIES, Manifest, SampleRecord
from shiftforge.synth import SynthConfig, generate_dataset


def make_record(index: int, **overrides) -> SampleRecord:
    """A valid record; functional part index pins the category."""
    part = index % 8
    fields = dict(
        sample_id=f"s{index:04d}",
        image_path=f"images/s{index:04d}.png",
        label="ok",
        part_id=f"fp-{part}-a",
        functional_part_id=f"fp-{part}",
        category=NON_GEAR_CATEGORIES[part % len(NON_GEAR_CATEGORIES)],
        transmission="manual",
        side="a",
        patch_origin=(0, 0),
    )
    fields.update(overrides)
    return SampleRecord(**fields)


def make_manifest(n: int = 24, nok_every: int = 3) -> Manifest:
    records = []
    for i in range(n):
        label = "nok" if i % nok_every == 0 else "ok"
        records.append(make_record(i, label=label))
    return Manifest(records=records)


@pytest.fixture
def small_manifest() -> Manifest:
    return make_manifest()


@pytest.fixture(scope="session")
def synth_small():
    """A 240-sample synthetic dataset shared by training-level tests."""
    return generate_dataset(SynthConfig(n_samples=240, seed=5))


@pytest.fixture(scope="session")
def rng_factory():
    def factory(seed: int) -> np.random.Generator:
        return np.random.default_rng(seed)

    return factory
