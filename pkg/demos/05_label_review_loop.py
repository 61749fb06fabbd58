"""Finding planted label mistakes with the review loop.

Twelve labels in a clean dataset are flipped to simulate annotation
slips. A scorer that mostly knows the truth then disagrees with exactly
those records, the disagreements become a review queue, a simulated
reviewer confirms each one, and applying the decisions repairs the
manifest. This is the whole loop: queue, verdicts, apply.
"""

import dataclasses
import tempfile
from pathlib import Path

import numpy as np

from shiftforge.manifest import LABEL_NOK, LABEL_OK, Manifest
from shiftforge.metrics import SamplePrediction
from shiftforge.review import (
    ReviewDecision,
    append_decision,
    apply_decisions,
    build_review_queue,
    load_decisions,
)
from shiftforge.synth import SynthConfig, generate_dataset

rng = np.random.default_rng(3)
dataset = generate_dataset(SynthConfig(n_samples=240, image_size=16, seed=3))
clean = {record.sample_id: record.label for record in dataset.records}

# Plant the mistakes: flip twelve labels and pretend that is the manifest
# the annotators delivered.
flipped_ids = set(
    rng.choice([r.sample_id for r in dataset.records], size=12, replace=False)
)
noisy_records = [
    dataclasses.replace(
        record, label=LABEL_OK if record.label == LABEL_NOK else LABEL_NOK
    )
    if record.sample_id in flipped_ids
    else record
    for record in dataset.records
]
noisy = Manifest(records=noisy_records)
print(f"planted {len(flipped_ids)} wrong labels among {len(noisy.records)} records")

# A scorer that has seen enough data to be right about the underlying
# part: high defect probability where the clean label says nok.
predictions = [
    SamplePrediction(
        sample_id=record.sample_id,
        fold_index=0,
        true_label=record.label,
        prob_nok=float(
            np.clip(
                (0.92 if clean[record.sample_id] == LABEL_NOK else 0.08)
                + rng.uniform(-0.05, 0.05),
                0.0,
                1.0,
            )
        ),
    )
    for record in noisy.records
]

queue = build_review_queue(predictions, noisy, "misclassified")
caught = {item.sample_id for item in queue} & flipped_ids
print(f"misclassified queue holds {len(queue)} items, "
      f"{len(caught)} of the {len(flipped_ids)} planted mistakes")
print()
print("lowest-confidence queue entries:")
for item in queue[:5]:
    print(f"  {item.sample_id}: stored {item.current_label}, model says "
          f"{item.model_prediction} at confidence {item.confidence:.2f}")
print()

# The reviewer checks each queued image and confirms the model: flip the
# stored label. Decisions append to a JSONL file so a crashed session
# replays losslessly.
decisions_path = Path(tempfile.mkdtemp(prefix="shiftforge_demo05_")) / "decisions.jsonl"
for item in queue:
    append_decision(
        ReviewDecision.now(item.sample_id, "flip", reviewer_id="demo"), decisions_path
    )

result = apply_decisions(noisy, load_decisions(decisions_path))
repaired = sum(
    1 for record in result.manifest.records if record.label == clean[record.sample_id]
)
wrong_before = sum(
    1 for record in noisy.records if record.label != clean[record.sample_id]
)
wrong_after = len(result.manifest.records) - repaired
print(f"applied {len(queue)} decisions: {len(result.changes)} records changed")
print(f"wrong labels before: {wrong_before}, after: {wrong_after}")
print(f"record count preserved: {len(result.manifest.records)} == {len(noisy.records)}")
