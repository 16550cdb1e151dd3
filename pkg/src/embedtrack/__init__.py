"""Tracking-by-detection on detector ROI features.

A small metric-learning head turns per-detection feature vectors into
embeddings in which the same physical object stays close across frames.
Tracking is then mutual-nearest-neighbour matching under a calibrated
distance threshold, and evaluation covers detection AP, MOTA, and
cross-frame pair accuracy.
"""

__version__ = "0.1.0"

from .association import (
    TrackState,
    distance_matrix,
    match_frames,
    track_sequence,
    update_tracks,
)
from .calibration import (
    DegenerateDevSetError,
    DistanceHistogram,
    LabeledDistance,
    PairCounts,
    SweepRow,
    ThresholdSweep,
    counts_at,
    distance_histogram,
    sweep_threshold,
    threshold_objective,
)
from .core import BoundingBox, DetectionRecord, FrameRecord, iou
from .datasets import (
    ConcatSample,
    FrameParseError,
    SimConfig,
    TrackRecord,
    build_mtmc_pairs,
    concat_neighbor_frames,
    default_archetypes,
    identity_index,
    labeled_batch_from_sample,
    load_frames,
    load_track_records,
    save_frames,
    save_track_records,
    simulate,
)
from .embedding import (
    EmbeddingHeadParams,
    LossConfig,
    embed,
    embed_batch,
    init_params,
    joint_loss,
    load_params,
    pairwise_distances,
    pull_loss,
    save_params,
    triplet_loss,
)
from .evaluation import (
    AP_IOU_THRESHOLDS,
    AssignmentResult,
    MotCounts,
    assign_predictions,
    average_precision,
    mean_ap,
    mot_counts,
    mota,
    pair_accuracy,
    pair_counts,
)
from .training import (
    LabeledBatch,
    TrainConfig,
    TrainingDivergedError,
    batch_loss,
    cosine_lr,
    finite_diff_gradient,
    gradient,
    train,
)

__all__ = [
    "__version__",
    "AP_IOU_THRESHOLDS",
    "AssignmentResult",
    "BoundingBox",
    "ConcatSample",
    "DegenerateDevSetError",
    "DetectionRecord",
    "DistanceHistogram",
    "EmbeddingHeadParams",
    "FrameParseError",
    "FrameRecord",
    "LabeledBatch",
    "LabeledDistance",
    "LossConfig",
    "MotCounts",
    "PairCounts",
    "SimConfig",
    "SweepRow",
    "ThresholdSweep",
    "TrackRecord",
    "TrackState",
    "TrainConfig",
    "TrainingDivergedError",
    "assign_predictions",
    "average_precision",
    "batch_loss",
    "build_mtmc_pairs",
    "concat_neighbor_frames",
    "cosine_lr",
    "counts_at",
    "default_archetypes",
    "distance_histogram",
    "distance_matrix",
    "embed",
    "embed_batch",
    "finite_diff_gradient",
    "gradient",
    "identity_index",
    "init_params",
    "iou",
    "joint_loss",
    "labeled_batch_from_sample",
    "load_frames",
    "load_params",
    "load_track_records",
    "match_frames",
    "mean_ap",
    "mot_counts",
    "mota",
    "pair_accuracy",
    "pair_counts",
    "pairwise_distances",
    "pull_loss",
    "save_frames",
    "save_params",
    "save_track_records",
    "simulate",
    "sweep_threshold",
    "threshold_objective",
    "track_sequence",
    "train",
    "triplet_loss",
    "update_tracks",
]
