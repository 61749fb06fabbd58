"""Qualitative model inspection: activation maps and 2-D projections.

gradcam answers "where did the model look": the target-class score is
differentiated with respect to a convolutional layer's activations, the
per-channel gradient means weight the activation channels, and the
rectified weighted sum becomes a heatmap. Projection squeezes test-set
embeddings into two dimensions for a scatter view; the heavy lifting is
delegated to scikit-learn's t-SNE.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .backbones import Backbone
from .ioutils import atomic_write_bytes, write_json

DEFAULT_PERPLEXITY = 30.0


@dataclass
class ActivationMap:
    """One sample's class-activation heatmap.

    raw_map is the rectified weighted activation sum at the target
    layer's resolution, unscaled. upsampled_map matches the input's
    spatial size and is divided by global_scale, which is shared by all
    maps produced in the same batch call.
    """

    sample_id: str
    target_layer: str
    raw_map: np.ndarray
    upsampled_map: np.ndarray
    global_scale: float

    def save(self, directory: str | Path) -> Path:
        """Write the map as a grayscale PNG plus a JSON sidecar."""
        from PIL import Image
        import io

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        scaled = np.clip(self.upsampled_map, 0.0, 1.0)
        pixels = (scaled * 255.0 + 0.5).astype(np.uint8)
        png_path = directory / f"{self.sample_id}_cam.png"
        buffer = io.BytesIO()
        Image.fromarray(pixels, mode="L").save(buffer, format="PNG")
        atomic_write_bytes(png_path, buffer.getvalue())
        write_json(
            directory / f"{self.sample_id}_cam.json",
            {
                "sample_id": self.sample_id,
                "target_layer": self.target_layer,
                "global_scale": self.global_scale,
                "raw_shape": list(self.raw_map.shape),
                "upsampled_shape": list(self.upsampled_map.shape),
            },
        )
        return png_path


def _resolve_layer(backbone: Backbone, target_layer: str | None) -> tuple[str, torch.nn.Module]:
    name = target_layer or backbone.default_gradcam_layer
    modules = dict(backbone.named_modules())
    if name not in modules:
        raise ValueError(f"backbone has no layer named '{name}'")
    return name, modules[name]


def gradcam_batch(
    backbone: Backbone,
    inputs: torch.Tensor,
    target_classes: Sequence[int],
    sample_ids: Sequence[str],
    target_layer: str | None = None,
) -> list[ActivationMap]:
    """Activation maps for a batch, normalized by one shared scale.

    inputs must already be transformed the way evaluation transforms
    them (normalized, N×3×H×W). The shared scale is the largest raw map
    value in the batch, so map intensities stay comparable across the
    batch's samples. All-zero batches keep a scale of 1 to avoid
    dividing by zero.
    """
    if inputs.ndim != 4:
        raise ValueError(f"expected a 4-d input batch, got shape {tuple(inputs.shape)}")
    if not len(inputs) == len(target_classes) == len(sample_ids):
        raise ValueError("inputs, target_classes, and sample_ids must have equal length")
    layer_name, layer = _resolve_layer(backbone, target_layer)

    captured: list[torch.Tensor] = []

    def hook(_module, _inputs, output):
        captured.append(output)

    handle = layer.register_forward_hook(hook)
    try:
        backbone.eval()
        inputs = inputs.detach().requires_grad_(False)
        _, logits = backbone(inputs)
    finally:
        handle.remove()
    if not captured:
        raise ValueError(f"layer '{layer_name}' did not run during the forward pass")
    activation = captured[-1]
    if activation.ndim != 4:
        raise ValueError(
            f"layer '{layer_name}' has no spatial extent (activation shape {tuple(activation.shape)})"
        )
    n_classes = logits.shape[1]
    targets = torch.tensor(list(target_classes), dtype=torch.long)
    if targets.min() < 0 or targets.max() >= n_classes:
        raise ValueError(f"target class out of range for {n_classes} classes")

    score = logits.gather(1, targets[:, None]).sum()
    grads = torch.autograd.grad(score, activation)[0]
    weights = grads.mean(dim=(2, 3))
    raw = torch.relu((weights[:, :, None, None] * activation).sum(dim=1))
    upsampled = F.interpolate(
        raw[:, None], size=inputs.shape[2:], mode="bilinear", align_corners=False
    )[:, 0]

    raw_np = raw.detach().numpy()
    scale = float(raw_np.max())
    if scale <= 0.0:
        scale = 1.0
    upsampled_np = upsampled.detach().numpy() / scale
    return [
        ActivationMap(
            sample_id=sample_ids[i],
            target_layer=layer_name,
            raw_map=raw_np[i],
            upsampled_map=upsampled_np[i],
            global_scale=scale,
        )
        for i in range(len(sample_ids))
    ]


def gradcam(
    backbone: Backbone,
    image: torch.Tensor,
    target_class: int,
    target_layer: str | None = None,
    sample_id: str = "sample",
) -> ActivationMap:
    """Single-sample activation map; the scale is the map's own maximum."""
    if image.ndim == 3:
        image = image[None]
    return gradcam_batch(backbone, image, [target_class], [sample_id], target_layer)[0]


@dataclass
class ProjectionResult:
    """2-D embedding coordinates in input order, plus how they were made."""

    sample_ids: tuple[str, ...]
    coordinates: np.ndarray
    perplexity: float
    seed: int
    implementation: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_ids": list(self.sample_ids),
            "coordinates": self.coordinates.tolist(),
            "perplexity": self.perplexity,
            "seed": self.seed,
            "implementation": self.implementation,
        }


def project_embeddings(
    embeddings: np.ndarray,
    sample_ids: Sequence[str] | None = None,
    perplexity: float = DEFAULT_PERPLEXITY,
    seed: int = 0,
) -> ProjectionResult:
    """t-SNE projection of embedding vectors to 2-D.

    Deterministic for a fixed seed within one scikit-learn version; the
    version is recorded on the result so mismatches are explainable.
    """
    import sklearn
    from sklearn.manifold import TSNE

    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise ValueError(f"expected an N×D embedding matrix, got shape {embeddings.shape}")
    n = embeddings.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 embeddings to project, got {n}")
    if not np.isfinite(embeddings).all():
        raise ValueError("embeddings contain non-finite values")
    if perplexity >= n:
        raise ValueError(f"perplexity {perplexity} must be below the sample count {n}")
    if sample_ids is None:
        sample_ids = tuple(f"row-{i}" for i in range(n))
    elif len(sample_ids) != n:
        raise ValueError(f"{len(sample_ids)} sample_ids for {n} embeddings")

    projector = TSNE(
        n_components=2,
        perplexity=perplexity,
        random_state=seed,
        init="pca",
        learning_rate="auto",
    )
    coordinates = projector.fit_transform(embeddings)
    return ProjectionResult(
        sample_ids=tuple(sample_ids),
        coordinates=np.asarray(coordinates, dtype=np.float64),
        perplexity=float(perplexity),
        seed=seed,
        implementation=f"scikit-learn {sklearn.__version__}",
    )


def export_projection_csv(result: ProjectionResult, path: str | Path) -> None:
    """Write sample_id,x,y rows for the review UI's scatter view."""
    import io

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sample_id", "x", "y"])
    for sample_id, (x, y) in zip(result.sample_ids, result.coordinates, strict=True):
        writer.writerow([sample_id, f"{x:.6f}", f"{y:.6f}"])
    atomic_write_bytes(Path(path), buffer.getvalue().encode("utf-8"))


def load_projection_csv(path: str | Path) -> list[dict[str, Any]]:
    """Read a projection CSV back into row dicts with float coordinates."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            rows.append(
                {"sample_id": row["sample_id"], "x": float(row["x"]), "y": float(row["y"])}
            )
    return rows
