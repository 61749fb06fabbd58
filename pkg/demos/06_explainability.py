"""Looking at what a trained fold learned.

Trains one category-holdout fold on the synthetic dataset, then asks two
questions. Where on the image does the classifier look? Class activation
maps answer per sample. How does the embedding space organize? A t-SNE
projection of the fold's test embeddings answers globally. Both outputs
land in a temp directory as files you can open.

Takes around half a minute.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from shiftforge.augment import eval_transform
from shiftforge.explain import export_projection_csv, gradcam_batch, project_embeddings
from shiftforge.splits import SplitStrategy, build_split
from shiftforge.synth import SynthConfig, benchmark_train_config, generate_dataset
from shiftforge.training import ArrayDataset, train_fold

out_dir = Path(tempfile.mkdtemp(prefix="shiftforge_demo06_"))

dataset = generate_dataset(SynthConfig())
data = ArrayDataset(images=dataset.images, records=dataset.records)
plan = build_split(
    dataset.manifest(), SplitStrategy(kind="category_s4", folds=4, seed=0)
)
config = benchmark_train_config(0.2, seed=2)

fold = plan.folds[0]
print(f"training fold 0, held-out group {fold.held_out_group} "
      f"({len(fold.train)} train / {len(fold.test)} test samples)")
run = train_fold(data, plan, 0, config)
print(f"fold F1 on the unseen group: {run.result.f1:.4f}")
print()

# Class activation maps for four held-out samples, two per class when
# available. The shared scale keeps the maps comparable side by side.
by_id = {record.sample_id: record for record in dataset.records}
test_ok = [s for s in fold.test if by_id[s].label == "ok"][:2]
test_nok = [s for s in fold.test if by_id[s].label == "nok"][:2]
sample_ids = test_ok + test_nok

images, records = data.gather(sample_ids)
inputs = eval_transform(
    torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))),
    config.augmentation,
)
model = run.backbone
model.eval()
with torch.no_grad():
    _, logits = model(inputs)
targets = logits.argmax(dim=1).tolist()

maps = gradcam_batch(model, inputs, targets, sample_ids)
print(f"activation maps (layer {maps[0].target_layer}, "
      f"shared scale {maps[0].global_scale:.4g}):")
for activation_map, record in zip(maps, records):
    path = activation_map.save(out_dir)
    peak = float(activation_map.upsampled_map.max())
    print(f"  {record.sample_id} ({record.label}): peak {peak:.3f} -> {path.name}")
print()

# Project the fold's stored test embeddings to 2-d. Points from the two
# classes should form visible groups even though this part category was
# never trained on.
projection = project_embeddings(
    run.result.embeddings,
    sample_ids=list(run.result.embedding_sample_ids),
    perplexity=10.0,
    seed=0,
)
csv_path = out_dir / "projection.csv"
export_projection_csv(projection, csv_path)

xy = projection.coordinates
labels = np.array([by_id[s].label for s in projection.sample_ids])
for label in ("ok", "nok"):
    centroid = xy[labels == label].mean(axis=0)
    print(f"{label} centroid in the projection: ({centroid[0]:+.1f}, {centroid[1]:+.1f})")
print(f"projection ({projection.implementation}) -> {csv_path}")
print()
print(f"all outputs under {out_dir}")
