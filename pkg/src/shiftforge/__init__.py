"""Quality-inspection training and evaluation under distribution shift.

The package covers the full loop: manifest handling and patch
extraction, grouped cross-validation split plans, a contrastive
regularization term next to the usual cross-entropy, deterministic
CPU-friendly training, defect-positive F1 reporting, a label-review
service, and explainability exports. ``shiftforge --help`` lists the
command-line entry points; the same functionality is importable from
the submodules re-exported here.
"""

from .errors import (
    ManifestIntegrityError,
    ManifestParseError,
    ManifestSchemaError,
    MissingMetadataError,
    ReviewError,
    ShiftForgeError,
    SingleClassError,
    SplitError,
    TooFewGroupsError,
    TrainingError,
)
from .manifest import (
    CATEGORIES,
    LABELS,
    Manifest,
    SampleRecord,
    load_manifest,
    save_manifest,
    serialize_manifest,
)
from .patches import FocusRegion, extract_patches
from .summary import DatasetSummary, summarize
from .splits import (
    FoldAssignment,
    SplitPlan,
    SplitStrategy,
    Violation,
    build_split,
    load_plan,
    save_plan,
    verify_split,
)
from .losses import (
    EmbeddingBatch,
    PredictionBatch,
    RegularizationConfig,
    combined_loss,
    combined_loss_and_grad,
    cosine_distance,
    cross_entropy,
    grad_check,
    pairwise_cosine_distances,
    snn_loss,
    snn_loss_and_grad,
    snn_loss_reference,
)
from .metrics import (
    CvReport,
    FoldResult,
    SamplePrediction,
    aggregate_cv,
    compare_runs,
    compute_fold_result,
)
from .training import (
    ArrayDataset,
    FoldRun,
    TrainConfig,
    epoch_order,
    evaluate,
    load_train_config,
    run_cv,
    train_fold,
)
from .review import (
    ApplyResult,
    ReviewDecision,
    ReviewItem,
    apply_decisions,
    build_review_queue,
    ensemble_predictions,
)
from .review_server import ReviewService, serve_review
from .explain import (
    ActivationMap,
    ProjectionResult,
    export_projection_csv,
    gradcam,
    gradcam_batch,
    project_embeddings,
)
from .synth import SynthConfig, SynthDataset, benchmark_train_config, generate_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "ApplyResult",
    "ArrayDataset",
    "CATEGORIES",
    "CvReport",
    "DatasetSummary",
    "EmbeddingBatch",
    "FocusRegion",
    "FoldAssignment",
    "FoldResult",
    "FoldRun",
    "LABELS",
    "Manifest",
    "ManifestIntegrityError",
    "ManifestParseError",
    "ManifestSchemaError",
    "MissingMetadataError",
    "PredictionBatch",
    "ProjectionResult",
    "RegularizationConfig",
    "ReviewDecision",
    "ReviewError",
    "ReviewItem",
    "ReviewService",
    "SamplePrediction",
    "SampleRecord",
    "ShiftForgeError",
    "SingleClassError",
    "SplitError",
    "SplitPlan",
    "SplitStrategy",
    "SynthConfig",
    "SynthDataset",
    "TooFewGroupsError",
    "TrainConfig",
    "TrainingError",
    "Violation",
    "aggregate_cv",
    "apply_decisions",
    "benchmark_train_config",
    "build_review_queue",
    "build_split",
    "combined_loss",
    "combined_loss_and_grad",
    "compare_runs",
    "compute_fold_result",
    "cosine_distance",
    "cross_entropy",
    "ensemble_predictions",
    "epoch_order",
    "evaluate",
    "export_projection_csv",
    "extract_patches",
    "generate_dataset",
    "grad_check",
    "gradcam",
    "gradcam_batch",
    "load_manifest",
    "load_plan",
    "load_train_config",
    "pairwise_cosine_distances",
    "project_embeddings",
    "run_cv",
    "save_dataset",
    "save_manifest",
    "save_plan",
    "serialize_manifest",
    "serve_review",
    "snn_loss",
    "snn_loss_and_grad",
    "snn_loss_reference",
    "summarize",
    "train_fold",
    "verify_split",
]
