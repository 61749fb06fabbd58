"""Activation maps and embedding projections."""

import numpy as np
import pytest
import torch

from shiftforge.backbones import build_backbone
from shiftforge.explain import (
    ActivationMap,
    export_projection_csv,
    gradcam,
    gradcam_batch,
    load_projection_csv,
    project_embeddings,
)


def small_model(seed=0):
    torch.manual_seed(seed)
    return build_backbone("small_cnn", channels=8)


def random_inputs(n=6, size=16, seed=1):
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(n, 3, size, size, generator=generator)


def test_gradcam_batch_contracts():
    model = small_model()
    inputs = random_inputs()
    ids = [f"s{i}" for i in range(6)]
    maps = gradcam_batch(model, inputs, [1] * 6, ids)
    assert len(maps) == 6
    scales = {m.global_scale for m in maps}
    assert len(scales) == 1  # one shared scale per batch call
    scale = scales.pop()
    assert scale > 0.0
    raw_max = max(m.raw_map.max() for m in maps)
    assert scale == pytest.approx(raw_max)
    for m, sample_id in zip(maps, ids):
        assert m.sample_id == sample_id
        assert m.target_layer == "features.conv3"
        assert m.raw_map.shape == (4, 4)  # two pooling stages from 16x16
        assert m.upsampled_map.shape == (16, 16)
        assert m.raw_map.min() >= 0.0
        assert m.upsampled_map.min() >= 0.0
        assert m.upsampled_map.max() <= 1.0 + 1e-6


def test_gradcam_peak_location_tracks_raw_peak():
    model = small_model(0)
    inputs = random_inputs(n=8, seed=100)
    maps = gradcam_batch(model, inputs, [0] * 8, [f"s{i}" for i in range(8)])
    checked = 0
    for m in maps:
        flat = np.sort(m.raw_map.ravel())
        if flat[-1] < 1.5 * max(flat[-2], 1e-9):
            continue  # ambiguous peak, locality need not hold
        raw_row, raw_col = np.unravel_index(m.raw_map.argmax(), m.raw_map.shape)
        up_row, up_col = np.unravel_index(m.upsampled_map.argmax(), m.upsampled_map.shape)
        cell = 16 / 4
        assert abs(up_row - (raw_row + 0.5) * cell) <= cell
        assert abs(up_col - (raw_col + 0.5) * cell) <= cell
        checked += 1
    assert checked >= 1


def test_gradcam_upsample_wiring():
    # The upsampled map is bilinear interpolation of the rectified raw map,
    # scaled afterwards; rectification before upsampling is the detail that
    # matters, so pin the whole chain.
    import torch.nn.functional as F

    model = small_model(0)
    inputs = random_inputs(n=4, seed=100)
    maps = gradcam_batch(model, inputs, [1] * 4, list("abcd"))
    scale = maps[0].global_scale
    for m in maps:
        expected = F.interpolate(
            torch.from_numpy(m.raw_map)[None, None],
            size=(16, 16),
            mode="bilinear",
            align_corners=False,
        )[0, 0].numpy()
        np.testing.assert_allclose(m.upsampled_map * scale, expected, atol=1e-6)


def test_gradcam_zero_activation_fallback_scale():
    model = small_model()
    with torch.no_grad():
        model.features.conv3.weight.zero_()
        model.features.conv3.bias.zero_()
    maps = gradcam_batch(model, random_inputs(n=3), [0, 1, 0], ["a", "b", "c"])
    for m in maps:
        assert m.global_scale == 1.0
        assert np.all(m.raw_map == 0.0)
        assert np.all(m.upsampled_map == 0.0)


def test_gradcam_classes_differ():
    model = small_model(5)
    inputs = random_inputs(n=2, seed=6)
    for_nok = gradcam_batch(model, inputs, [1, 1], ["a", "b"])
    for_ok = gradcam_batch(model, inputs, [0, 0], ["a", "b"])
    assert not np.allclose(for_nok[0].raw_map, for_ok[0].raw_map)


def test_gradcam_validation_errors():
    model = small_model()
    inputs = random_inputs(n=2)
    with pytest.raises(ValueError, match="4-d"):
        gradcam_batch(model, inputs[0], [0], ["a"])
    with pytest.raises(ValueError, match="equal length"):
        gradcam_batch(model, inputs, [0], ["a", "b"])
    with pytest.raises(ValueError, match="no layer named"):
        gradcam_batch(model, inputs, [0, 1], ["a", "b"], target_layer="features.conv9")
    with pytest.raises(ValueError, match="no spatial extent"):
        gradcam_batch(model, inputs, [0, 1], ["a", "b"], target_layer="classifier")
    with pytest.raises(ValueError, match="out of range"):
        gradcam_batch(model, inputs, [0, 2], ["a", "b"])


def test_gradcam_single_sample_wrapper():
    model = small_model()
    image = random_inputs(n=1)[0]
    result = gradcam(model, image, target_class=1, sample_id="solo")
    assert result.sample_id == "solo"
    assert result.upsampled_map.shape == (16, 16)
    # A lone sample is its own batch, so its own maximum sets the scale.
    assert result.global_scale == pytest.approx(result.raw_map.max())


def test_activation_map_save(tmp_path):
    model = small_model()
    result = gradcam(model, random_inputs(n=1)[0], target_class=1, sample_id="s42")
    png_path = result.save(tmp_path / "maps")
    assert png_path == tmp_path / "maps" / "s42_cam.png"
    assert png_path.exists()

    from PIL import Image
    import json

    with Image.open(png_path) as img:
        assert img.mode == "L"
        assert img.size == (16, 16)
    sidecar = json.loads((tmp_path / "maps" / "s42_cam.json").read_text())
    assert sidecar["sample_id"] == "s42"
    assert sidecar["target_layer"] == "features.conv3"
    assert sidecar["raw_shape"] == [4, 4]
    assert sidecar["upsampled_shape"] == [16, 16]
    assert sidecar["global_scale"] == pytest.approx(result.global_scale)


def clustered_embeddings(rng, n_per=30, dim=8, separation=8.0):
    a = rng.normal(0.0, 1.0, size=(n_per, dim))
    b = rng.normal(0.0, 1.0, size=(n_per, dim)) + separation
    labels = np.array([0] * n_per + [1] * n_per)
    return np.vstack([a, b]), labels


def silhouette(points, labels):
    """Plain-loop silhouette score, the oracle for projection quality."""
    n = len(points)
    distances = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    scores = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        other = [j for j in range(n) if labels[j] != labels[i]]
        a = distances[i, same].mean()
        b = distances[i, other].mean()
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))


def test_projection_separates_clusters(rng_factory):
    rng = rng_factory(70)
    embeddings, labels = clustered_embeddings(rng)
    result = project_embeddings(embeddings, perplexity=10.0, seed=0)
    assert result.coordinates.shape == (60, 2)
    assert silhouette(result.coordinates, labels) > 0.5


def test_projection_determinism_and_metadata(rng_factory):
    rng = rng_factory(71)
    embeddings, _ = clustered_embeddings(rng, n_per=10)
    ids = [f"e{i}" for i in range(20)]
    first = project_embeddings(embeddings, sample_ids=ids, perplexity=5.0, seed=3)
    second = project_embeddings(embeddings, sample_ids=ids, perplexity=5.0, seed=3)
    np.testing.assert_array_equal(first.coordinates, second.coordinates)
    assert first.sample_ids == tuple(ids)
    assert first.perplexity == 5.0
    assert first.seed == 3
    assert first.implementation.startswith("scikit-learn ")
    payload = first.to_dict()
    assert payload["sample_ids"][:2] == ["e0", "e1"]
    assert len(payload["coordinates"]) == 20


def test_projection_validation(rng_factory):
    rng = rng_factory(72)
    good = rng.normal(size=(10, 4))
    with pytest.raises(ValueError, match="at least 4"):
        project_embeddings(good[:3])
    with pytest.raises(ValueError, match="perplexity"):
        project_embeddings(good, perplexity=10.0)
    with pytest.raises(ValueError, match="non-finite"):
        bad = good.copy()
        bad[2, 1] = np.nan
        project_embeddings(bad, perplexity=5.0)
    with pytest.raises(ValueError, match="matrix"):
        project_embeddings(good.ravel())
    with pytest.raises(ValueError, match="sample_ids"):
        project_embeddings(good, sample_ids=["only-one"], perplexity=5.0)


def test_projection_handles_duplicate_rows(rng_factory):
    # Duplicate embeddings are legal input; t-SNE must still return finite
    # coordinates for them.
    rng = rng_factory(73)
    base = rng.normal(size=(12, 5))
    base[4] = base[3]
    result = project_embeddings(base, perplexity=5.0, seed=1)
    assert np.isfinite(result.coordinates).all()


def test_csv_round_trip(tmp_path, rng_factory):
    rng = rng_factory(74)
    embeddings, _ = clustered_embeddings(rng, n_per=8)
    ids = [f"p{i:02d}" for i in range(16)]
    result = project_embeddings(embeddings, sample_ids=ids, perplexity=5.0, seed=0)
    path = tmp_path / "projection.csv"
    export_projection_csv(result, path)

    text = path.read_text()
    assert text.startswith("sample_id,x,y\n")
    rows = load_projection_csv(path)
    assert [row["sample_id"] for row in rows] == ids
    for row, (x, y) in zip(rows, result.coordinates):
        assert abs(row["x"] - x) <= 5e-7
        assert abs(row["y"] - y) <= 5e-7
