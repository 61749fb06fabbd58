"""Per-fold training and cross-validation orchestration.

Training is deterministic on CPU: backbone initialization, batch order,
and augmentation draws are all derived from the config seed through
named stream indices, so two runs with the same inputs produce the same
weights, losses, and scores. The shuffling order is a pure function of
(seed, epoch) and is exposed as :func:`epoch_order` so an external
reimplementation of the batching can align with it batch for batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

import numpy as np
import torch

from .augment import AugmentationConfig, eval_transform, train_transform
from .backbones import Backbone, build_backbone
from .errors import ShiftForgeError, SingleClassError, TrainingError
from .ioutils import write_json, write_jsonl
from .losses import RegularizationConfig
from .manifest import LABEL_NOK, Manifest, SampleRecord
from .metrics import (
    CLASS_INDEX,
    CvReport,
    FoldResult,
    aggregate_cv,
    compute_fold_result,
    fingerprint,
)
from .splits import SplitPlan, save_plan
from .torch_losses import combined_objective

SCHEDULERS = ("cosine_annealing", "constant")

# Stream indices keep the seed material of unrelated random consumers
# disjoint: [seed, _STREAM_*, index] never collides across purposes.
_STREAM_EPOCH = 0
_STREAM_INIT = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on, in one serializable place."""

    backbone: str = "small_cnn"
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-4
    scheduler: str = "cosine_annealing"
    augmentation: AugmentationConfig = AugmentationConfig()
    regularization: RegularizationConfig = RegularizationConfig()
    seed: int = 0
    backbone_options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.regularization.alpha > 0 and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 when the contrastive weight is non-zero")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}, got '{self.scheduler}'")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "backbone": self.backbone,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "scheduler": self.scheduler,
            "augmentation": self.augmentation.to_dict(),
            "regularization": self.regularization.to_dict(),
            "seed": self.seed,
            "backbone_options": dict(sorted(self.backbone_options.items())),
        }

    @classmethod
    def from_dict(cls, row: dict[str, Any]) -> "TrainConfig":
        defaults = cls()
        return cls(
            backbone=row.get("backbone", defaults.backbone),
            epochs=int(row.get("epochs", defaults.epochs)),
            batch_size=int(row.get("batch_size", defaults.batch_size)),
            learning_rate=float(row.get("learning_rate", defaults.learning_rate)),
            scheduler=row.get("scheduler", defaults.scheduler),
            augmentation=AugmentationConfig.from_dict(row.get("augmentation", {})),
            regularization=RegularizationConfig.from_dict(row.get("regularization", {})),
            seed=int(row.get("seed", defaults.seed)),
            backbone_options=dict(row.get("backbone_options", {})),
        )


def load_train_config(path: str | Path) -> TrainConfig:
    """Read a TrainConfig from a JSON or TOML file, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib

        with open(path, "rb") as handle:
            row = tomllib.load(handle)
    else:
        import json

        row = json.loads(path.read_text(encoding="utf-8"))
    return TrainConfig.from_dict(row)


@dataclass
class ArrayDataset:
    """Decoded images bound to their manifest records.

    The manifest stores image paths only; training needs pixels. Images
    are float32 in [0, 1], shaped (N, H, W, 3), in record order.
    """

    images: np.ndarray
    records: list[SampleRecord]
    index_by_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise ValueError(f"expected images shaped (N, H, W, 3), got {self.images.shape}")
        if len(self.images) != len(self.records):
            raise ValueError(
                f"{len(self.images)} images for {len(self.records)} records"
            )
        self.index_by_id = {r.sample_id: i for i, r in enumerate(self.records)}
        if len(self.index_by_id) != len(self.records):
            raise ValueError("duplicate sample_id in dataset records")

    @classmethod
    def from_manifest(cls, manifest: Manifest, root: str | Path) -> "ArrayDataset":
        """Decode every active record's image below ``root``."""
        from PIL import Image

        root = Path(root)
        records = manifest.active_records()
        if not records:
            raise ValueError("manifest has no active records")
        images = []
        for record in records:
            with Image.open(root / record.image_path) as img:
                images.append(np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0)
        return cls(images=np.stack(images), records=records)

    def gather(self, sample_ids: tuple[str, ...]) -> tuple[np.ndarray, list[SampleRecord]]:
        """Images and records for the given ids, preserving id order."""
        missing = [s for s in sample_ids if s not in self.index_by_id]
        if missing:
            raise KeyError(f"sample ids not in dataset: {missing[:5]}")
        idx = np.array([self.index_by_id[s] for s in sample_ids], dtype=np.intp)
        return self.images[idx], [self.records[i] for i in idx]


def _stream_words(seed: int, stream: int, index: int, count: int) -> np.ndarray:
    return np.random.SeedSequence([seed, stream, index]).generate_state(count)


def epoch_order(n_samples: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffled sample order for one epoch, pure in (seed, epoch)."""
    words = _stream_words(seed, _STREAM_EPOCH, epoch, 2)
    return np.random.default_rng(int(words[0])).permutation(n_samples)


def _epoch_generator(seed: int, epoch: int) -> torch.Generator:
    words = _stream_words(seed, _STREAM_EPOCH, epoch, 2)
    generator = torch.Generator()
    generator.manual_seed(int(words[1]))
    return generator


def fold_init_seed(seed: int, fold_index: int) -> int:
    """Seed for backbone initialization, distinct per fold."""
    return int(_stream_words(seed, _STREAM_INIT, fold_index, 1)[0])


def batch_slices(order: np.ndarray, batch_size: int, drop_singletons: bool) -> Iterator[np.ndarray]:
    """Consecutive index chunks of the epoch order.

    A trailing chunk of size 1 is dropped when drop_singletons is set;
    the contrastive term has no pairs to work with there.
    """
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        if drop_singletons and len(chunk) == 1:
            continue
        yield chunk


@dataclass
class FoldRun:
    """A trained fold: the model, its scores, and the loss trace."""

    backbone: Backbone
    result: FoldResult
    batch_losses: list[float]
    epoch_mean_losses: list[float]


def _build_model(config: TrainConfig, init_seed: int) -> Backbone:
    torch.manual_seed(init_seed)
    return build_backbone(config.backbone, **config.backbone_options)


def _class_counts(labels: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    return counts


def train_on_arrays(
    images: np.ndarray,
    labels: list[str],
    config: TrainConfig,
    init_seed: int,
    forbidden_ids: frozenset[str] = frozenset(),
    sample_ids: list[str] | None = None,
) -> tuple[Backbone, list[float], list[float]]:
    """Train a fresh backbone on the given samples.

    Returns the model plus per-batch and per-epoch-mean losses. When
    forbidden_ids is non-empty, every epoch asserts that none of the ids
    scheduled for training belongs to it (test-set isolation).
    """
    counts = _class_counts(labels)
    if len(counts) < 2:
        raise SingleClassError(f"training set has a single class: {counts}")

    model = _build_model(config, init_seed)
    model.train()
    x_all = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))
    y_all = torch.tensor([CLASS_INDEX[label] for label in labels], dtype=torch.long)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    scheduler = None
    if config.scheduler == "cosine_annealing" and config.epochs > 0:
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs)

    drop_singletons = config.regularization.alpha > 0
    batch_losses: list[float] = []
    epoch_means: list[float] = []
    for epoch in range(config.epochs):
        order = epoch_order(len(labels), config.seed, epoch)
        if forbidden_ids and sample_ids is not None:
            scheduled = {sample_ids[i] for i in order}
            overlap = scheduled & forbidden_ids
            assert not overlap, f"test samples scheduled for training: {sorted(overlap)[:5]}"
        generator = _epoch_generator(config.seed, epoch)
        epoch_losses: list[float] = []
        for chunk in batch_slices(order, config.batch_size, drop_singletons):
            idx = torch.from_numpy(np.ascontiguousarray(chunk))
            x = train_transform(x_all[idx], config.augmentation, generator)
            y = y_all[idx]
            embeddings, logits = model(x)
            loss = combined_objective(logits, embeddings, y, config.regularization)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        if scheduler is not None:
            scheduler.step()
        batch_losses.extend(epoch_losses)
        epoch_means.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    return model, batch_losses, epoch_means


def predict(
    model: Backbone, images: np.ndarray, config: TrainConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Defect probabilities and embeddings in evaluation mode."""
    model.eval()
    x_all = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))
    probs: list[np.ndarray] = []
    embeddings: list[np.ndarray] = []
    nok_index = CLASS_INDEX[LABEL_NOK]
    with torch.no_grad():
        for start in range(0, len(x_all), config.batch_size):
            x = eval_transform(x_all[start : start + config.batch_size], config.augmentation)
            emb, logits = model(x)
            probs.append(torch.softmax(logits, dim=1)[:, nok_index].numpy())
            embeddings.append(emb.numpy())
    return np.concatenate(probs), np.concatenate(embeddings)


def evaluate(
    model: Backbone,
    images: np.ndarray,
    records: list[SampleRecord],
    config: TrainConfig,
    fold_index: int = 0,
    held_out_group: str | None = None,
) -> FoldResult:
    """Score a model on a test set; augmentation stays off, only normalization runs."""
    if not records:
        raise TrainingError(f"fold {fold_index}: empty test set")
    prob_nok, embeddings = predict(model, images, config)
    result = compute_fold_result(
        fold_index=fold_index,
        sample_ids=[r.sample_id for r in records],
        true_labels=[r.label for r in records],
        prob_nok=prob_nok,
        categories=[r.category for r in records],
        held_out_group=held_out_group,
    )
    result.embeddings = embeddings
    result.embedding_sample_ids = tuple(r.sample_id for r in records)
    return result


def train_fold(data: ArrayDataset, plan: SplitPlan, fold_index: int, config: TrainConfig) -> FoldRun:
    """Train one fold of the plan and score it on the fold's test set."""
    folds = {f.fold_index: f for f in plan.folds}
    if fold_index not in folds:
        raise TrainingError(f"plan has no fold {fold_index}")
    fold = folds[fold_index]
    train_images, train_records = data.gather(fold.train)
    test_images, test_records = data.gather(fold.test)
    if not test_records:
        raise TrainingError(f"fold {fold_index}: empty test set")

    model, batch_losses, epoch_means = train_on_arrays(
        train_images,
        [r.label for r in train_records],
        config,
        init_seed=fold_init_seed(config.seed, fold_index),
        forbidden_ids=frozenset(fold.test),
        sample_ids=[r.sample_id for r in train_records],
    )
    result = evaluate(
        model,
        test_images,
        test_records,
        config,
        fold_index=fold_index,
        held_out_group=fold.held_out_group,
    )
    return FoldRun(
        backbone=model,
        result=result,
        batch_losses=batch_losses,
        epoch_mean_losses=epoch_means,
    )


def run_cv(
    data: ArrayDataset,
    plan: SplitPlan,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    keep_models: bool = False,
    progress: Callable[[str], None] | None = None,
) -> CvReport:
    """Train every fold independently and aggregate F1 statistics.

    With out_dir set, writes the config snapshot, the plan, per-fold
    metrics, predictions, embeddings, and model weights, plus the
    aggregate report. Everything JSON is byte-stable across reruns.
    progress, when given, receives one line per fold start and finish.
    """
    config_fp = fingerprint(config.to_dict())
    plan_fp = fingerprint(plan.to_dict())
    results: list[FoldResult] = []
    models: list[Backbone] = []
    for fold in plan.folds:
        if progress is not None:
            progress(
                f"fold {fold.fold_index}: {len(fold.train)} train / {len(fold.test)} test samples"
            )
        try:
            run = train_fold(data, plan, fold.fold_index, config)
        except ShiftForgeError as exc:
            raise type(exc)(f"fold {fold.fold_index}: {exc}") from exc
        if progress is not None:
            progress(f"fold {fold.fold_index}: f1 {run.result.f1:.4f}")
        results.append(run.result)
        if keep_models or out_dir is not None:
            models.append(run.backbone)

    report = aggregate_cv(results, config_fp, plan_fp)
    if out_dir is not None:
        _persist_run(Path(out_dir), plan, config, report, models)
    return report


def _persist_run(
    out_dir: Path,
    plan: SplitPlan,
    config: TrainConfig,
    report: CvReport,
    models: list[Backbone],
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        out_dir / "config.json",
        {
            "train_config": config.to_dict(),
            "config_fingerprint": report.config_fingerprint,
            "plan_fingerprint": report.plan_fingerprint,
        },
    )
    save_plan(plan, out_dir / "plan.json")
    write_json(out_dir / "report.json", report.to_dict())
    for result, model in zip(report.folds, models, strict=True):
        fold_dir = out_dir / "folds" / f"fold_{result.fold_index}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        write_json(fold_dir / "metrics.json", result.to_dict())
        write_jsonl(fold_dir / "predictions.jsonl", [p.to_dict() for p in result.predictions])
        if result.embeddings is not None:
            np.save(fold_dir / "embeddings.npy", result.embeddings.astype(np.float32))
            write_json(
                fold_dir / "embeddings.json",
                {
                    "shape": list(result.embeddings.shape),
                    "dtype": "float32",
                    "sample_ids": list(result.embedding_sample_ids),
                },
            )
        torch.save(model.state_dict(), fold_dir / "model.pt")
