"""Detection and tracking metrics.

Covers three evaluation layers: identity assignment of predicted boxes to
ground truth (the labeling step everything else builds on), detection
AP / mAP, and tracking quality via MOTA counts and cross-frame pair
accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .calibration import PairCounts
from .core import BoundingBox, iou

__all__ = [
    "AP_IOU_THRESHOLDS",
    "AssignmentResult",
    "MotCounts",
    "assign_predictions",
    "average_precision",
    "mean_ap",
    "mota",
    "mot_counts",
    "pair_counts",
    "pair_accuracy",
]

AP_IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class MotCounts:
    """Per-sequence tallies of tracking errors against ground-truth boxes."""

    fp: int
    miss: int
    mismatch: int
    gt_total: int

    def __post_init__(self) -> None:
        for name in ("fp", "miss", "mismatch", "gt_total"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class AssignmentResult:
    """One entry per input prediction: the (identity, image_slot) it was
    assigned, or None when filtered out, under the IoU floor, or outbid."""

    assignments: tuple[Optional[tuple[int, int]], ...]


def _claim_best_gt(
    pred_boxes: Sequence[Optional[BoundingBox]],
    gt_boxes: Sequence[BoundingBox],
    iou_min: float,
) -> list[Optional[int]]:
    """Unique highest-IoU matching used by assignment and MOT counting.

    Each prediction claims its highest-IoU ground truth provided that IoU is
    strictly above iou_min; when several predictions claim the same ground
    truth, the highest-IoU claimant keeps it (ties to the lowest prediction
    index) and the rest end up unmatched, with no second choice. A None
    prediction never claims (placeholder for confidence-filtered entries).
    """
    claims: list[Optional[int]] = [None] * len(pred_boxes)
    if not gt_boxes:
        return claims
    best_iou = [0.0] * len(pred_boxes)
    for i, pb in enumerate(pred_boxes):
        if pb is None:
            continue
        overlaps = [iou(pb, gb) for gb in gt_boxes]
        j = int(np.argmax(overlaps))
        if overlaps[j] > iou_min:
            claims[i] = j
            best_iou[i] = overlaps[j]
    winners: dict[int, int] = {}
    for i, j in enumerate(claims):
        if j is None:
            continue
        if j not in winners or best_iou[i] > best_iou[winners[j]]:
            winners[j] = i
    return [j if j is not None and winners[j] == i else None for i, j in enumerate(claims)]


def assign_predictions(
    predictions: Sequence[tuple[BoundingBox, float]],
    ground_truths: Sequence[tuple[BoundingBox, int, int]],
    score_threshold: float = 0.5,
    iou_min: float = 0.5,
) -> AssignmentResult:
    """Label predicted boxes with ground-truth identities.

    Predictions are (box, confidence); those below `score_threshold` are
    dropped. Ground truths are (box, identity, image_slot). Each surviving
    prediction is paired with its highest-IoU ground truth when that IoU
    exceeds `iou_min`; contested ground truths go to the highest-IoU
    prediction and the losers are left unassigned, so every ground truth
    labels at most one prediction.
    """
    if not 0.0 < iou_min < 1.0:
        raise ValueError(f"iou_min must lie in (0, 1), got {iou_min}")
    pred_boxes = [
        box if conf >= score_threshold else None for box, conf in predictions
    ]
    claims = _claim_best_gt(pred_boxes, [g[0] for g in ground_truths], iou_min)
    return AssignmentResult(
        assignments=tuple(
            (ground_truths[j][1], ground_truths[j][2]) if j is not None else None
            for j in claims
        )
    )


def average_precision(
    predictions: Sequence[tuple[int, BoundingBox, float]],
    ground_truths: Sequence[tuple[int, BoundingBox]],
    iou_threshold: float,
    interpolation: Literal["all_point", "eleven_point"] = "all_point",
) -> float:
    """Detection average precision at one IoU threshold.

    Predictions are (image_id, box, confidence) across any number of images;
    ground truths are (image_id, box). Predictions are ranked by confidence
    (ties keep input order) and greedily matched to the best still-unmatched
    ground truth of their image at IoU >= iou_threshold. The default
    integration is exact all-point interpolation; "eleven_point" averages
    interpolated precision at recalls 0.0, 0.1, ..., 1.0 instead.
    """
    if not ground_truths:
        raise ValueError("average precision is undefined without ground truths")
    if not predictions:
        return 0.0

    by_image: dict[int, list[int]] = {}
    for gi, (img, _) in enumerate(ground_truths):
        by_image.setdefault(img, []).append(gi)
    matched = [False] * len(ground_truths)

    conf = np.array([c for _, _, c in predictions])
    order = np.argsort(-conf, kind="stable")
    is_tp = np.zeros(order.size, dtype=bool)
    for rank, k in enumerate(order):
        img, box, _ = predictions[k]
        best_j, best_ov = None, 0.0
        for gi in by_image.get(img, ()):
            if matched[gi]:
                continue
            ov = iou(box, ground_truths[gi][1])
            if ov >= iou_threshold and ov > best_ov:
                best_j, best_ov = gi, ov
        if best_j is not None:
            matched[best_j] = True
            is_tp[rank] = True

    tp_cum = np.cumsum(is_tp)
    fp_cum = np.cumsum(~is_tp)
    recall = tp_cum / len(ground_truths)
    precision = tp_cum / (tp_cum + fp_cum)

    if interpolation == "eleven_point":
        levels = np.linspace(0.0, 1.0, 11)
        vals = [precision[recall >= r].max() if (recall >= r).any() else 0.0 for r in levels]
        return float(np.mean(vals))
    if interpolation != "all_point":
        raise ValueError(f"unknown interpolation {interpolation!r}")

    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    change = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[change + 1] - mrec[change]) * mpre[change + 1]))


def mean_ap(
    predictions: Sequence[tuple[int, BoundingBox, float]],
    ground_truths: Sequence[tuple[int, BoundingBox]],
    iou_thresholds: Sequence[float] = AP_IOU_THRESHOLDS,
    interpolation: Literal["all_point", "eleven_point"] = "all_point",
) -> float:
    """Mean of `average_precision` over the given IoU thresholds."""
    if not iou_thresholds:
        raise ValueError("at least one IoU threshold is required")
    return float(
        np.mean(
            [
                average_precision(predictions, ground_truths, t, interpolation)
                for t in iou_thresholds
            ]
        )
    )


def mota(counts: MotCounts) -> float:
    """1 - (miss + fp + mismatch) / gt_total. May be negative."""
    if counts.gt_total == 0:
        raise ValueError("MOTA is undefined with no ground-truth objects")
    return 1.0 - (counts.miss + counts.fp + counts.mismatch) / counts.gt_total


def mot_counts(
    pred_frames: Sequence[Sequence[tuple[BoundingBox, int]]],
    gt_frames: Sequence[Sequence[tuple[BoundingBox, int]]],
    iou_min: float = 0.5,
) -> MotCounts:
    """Tally false positives, misses, and identity mismatches over a sequence.

    `pred_frames[t]` holds (box, track_id) tracker outputs, `gt_frames[t]`
    holds (box, identity) ground truths; the two sequences must be frame
    aligned. Boxes are matched per frame by the unique highest-IoU rule. A
    mismatch is a matched ground truth whose track id differs from the
    track id it was last matched with, however long ago that was.
    """
    if len(pred_frames) != len(gt_frames):
        raise ValueError(
            f"{len(pred_frames)} prediction frames vs {len(gt_frames)} ground-truth frames"
        )
    fp = miss = mismatch = gt_total = 0
    last_track: dict[int, int] = {}
    for preds, gts in zip(pred_frames, gt_frames):
        gt_total += len(gts)
        claims = _claim_best_gt([b for b, _ in preds], [b for b, _ in gts], iou_min)
        matched_gts = set()
        for i, j in enumerate(claims):
            if j is None:
                fp += 1
                continue
            matched_gts.add(j)
            identity = gts[j][1]
            track_id = preds[i][1]
            if identity in last_track and last_track[identity] != track_id:
                mismatch += 1
            last_track[identity] = track_id
        miss += len(gts) - len(matched_gts)
    return MotCounts(fp=fp, miss=miss, mismatch=mismatch, gt_total=gt_total)


def pair_counts(
    pred_frames: Sequence[Sequence[tuple[BoundingBox, float, int]]],
    gt_frames: Sequence[Sequence[tuple[BoundingBox, int]]],
    score_threshold: float = 0.5,
    iou_min: float = 0.5,
) -> PairCounts:
    """Confusion counts over all cross-frame detection pairs.

    `pred_frames[t]` holds (box, confidence, track_id). Each frame's
    predictions are first labeled with ground-truth identities via
    `assign_predictions`; then for every consecutive frame pair, every
    (labeled detection in t) x (labeled detection in t+1) combination is
    scored: actually-same means equal identities, predicted-same means equal
    track ids. Pairs involving an unlabeled detection are skipped.
    """
    if len(pred_frames) != len(gt_frames):
        raise ValueError(
            f"{len(pred_frames)} prediction frames vs {len(gt_frames)} ground-truth frames"
        )
    labeled: list[list[tuple[int, int]]] = []
    for preds, gts in zip(pred_frames, gt_frames):
        result = assign_predictions(
            [(b, c) for b, c, _ in preds],
            [(b, ident, 0) for b, ident in gts],
            score_threshold=score_threshold,
            iou_min=iou_min,
        )
        labeled.append(
            [
                (assigned[0], preds[i][2])
                for i, assigned in enumerate(result.assignments)
                if assigned is not None
            ]
        )
    tp = tn = fp = fn = 0
    for cur, nxt in zip(labeled, labeled[1:]):
        for ident_a, track_a in cur:
            for ident_b, track_b in nxt:
                actual = ident_a == ident_b
                predicted = track_a == track_b
                if actual and predicted:
                    tp += 1
                elif actual:
                    fn += 1
                elif predicted:
                    fp += 1
                else:
                    tn += 1
    return PairCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def pair_accuracy(counts: PairCounts) -> float:
    """(tp + tn) / (tp + tn + fp + fn)."""
    total = counts.tp + counts.tn + counts.fp + counts.fn
    if total == 0:
        raise ValueError("pair accuracy is undefined with no pairs")
    return (counts.tp + counts.tn) / total
