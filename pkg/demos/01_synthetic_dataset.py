"""A first look at the bundled synthetic inspection dataset.

Four part groups share one defect mechanism, a bright scratch, but each
group carries its own background texture and its own defect rate. The
rates run from 80 percent down to 20 percent, so group texture is a
tempting stand-in for the label. That shortcut is exactly what the later
demos measure and counter.

Runs in a few seconds and writes a browsable copy of the dataset to a
temp directory.
"""

import tempfile
from pathlib import Path

import numpy as np

from shiftforge.summary import summarize
from shiftforge.synth import SynthConfig, generate_dataset, save_dataset

config = SynthConfig(n_samples=400, image_size=32, seed=0)
dataset = generate_dataset(config)

print(f"images: {dataset.images.shape}, dtype {dataset.images.dtype}, "
      f"range [{dataset.images.min():.3f}, {dataset.images.max():.3f}]")
print(f"records: {len(dataset.records)}")
print()

# Per-group composition. The ok fraction is the designed gradient; the
# scratch brightens defective samples, which shows up in the mean pixel.
summary = summarize(dataset.manifest())
print(f"{'category':<24} {'ok':>5} {'nok':>5} {'ok fraction':>12} {'mean pixel':>11}")
for category, counts in summary.per_category.items():
    fraction = summary.ok_fraction_per_category[category]
    member_rows = [
        i for i, r in enumerate(dataset.records) if r.category == category
    ]
    mean_pixel = float(dataset.images[member_rows].mean())
    print(f"{category:<24} {counts.get('ok', 0):>5} {counts.get('nok', 0):>5} "
          f"{fraction:>12.2f} {mean_pixel:>11.3f}")
print()

# Defective samples are brighter than intact ones within every group,
# because the defect motif is shared. Only the rates differ.
for category in summary.per_category:
    rows = [(i, r) for i, r in enumerate(dataset.records) if r.category == category]
    ok_mean = np.mean([dataset.images[i].mean() for i, r in rows if r.label == "ok"])
    nok_mean = np.mean([dataset.images[i].mean() for i, r in rows if r.label == "nok"])
    print(f"{category:<24} ok {ok_mean:.3f} < nok {nok_mean:.3f}")
print()

out_dir = Path(tempfile.mkdtemp(prefix="shiftforge_demo01_"))
manifest_path = save_dataset(dataset, out_dir)
print(f"dataset written to {out_dir}")
print(f"manifest: {manifest_path}")
print("first two manifest lines:")
with open(manifest_path, encoding="utf-8") as handle:
    for line, _ in zip(handle, range(2)):
        print(f"  {line.rstrip()}")
