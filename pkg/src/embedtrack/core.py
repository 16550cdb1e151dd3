"""Geometric primitives and per-frame detection records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = ["BoundingBox", "DetectionRecord", "FrameRecord", "iou"]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates, corner form, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box (requires x1 < x2 and y1 < y2): {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float = 0.0, dy: float = 0.0) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_list(self) -> list[float]:
        return [float(self.x1), float(self.y1), float(self.x2), float(self.y2)]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when they are disjoint."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """One detected object: box, detector confidence, and its ROI feature vector.

    `gt_identity` is the annotated object identity when known, `image_slot`
    distinguishes the two halves of a concatenated training sample (0 for the
    first image, 1 for the second).
    """

    box: BoundingBox
    confidence: float
    feature: np.ndarray
    gt_identity: Optional[int] = None
    image_slot: int = 0

    def __post_init__(self) -> None:
        feat = np.array(self.feature, dtype=np.float64, copy=True)
        if feat.ndim != 1:
            raise ValueError(f"feature must be a 1-D vector, got shape {feat.shape}")
        if not np.all(np.isfinite(feat)):
            raise ValueError("feature contains non-finite entries")
        feat.flags.writeable = False
        object.__setattr__(self, "feature", feat)
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.gt_identity is not None and self.gt_identity < 0:
            raise ValueError(f"gt_identity must be non-negative, got {self.gt_identity}")
        if self.image_slot not in (0, 1):
            raise ValueError(f"image_slot must be 0 or 1, got {self.image_slot}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DetectionRecord):
            return NotImplemented
        return (
            self.box == other.box
            and self.confidence == other.confidence
            and np.array_equal(self.feature, other.feature)
            and self.gt_identity == other.gt_identity
            and self.image_slot == other.image_slot
        )


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """All detections and ground-truth boxes of one video frame."""

    frame_index: int
    camera_id: int
    detections: tuple[DetectionRecord, ...]
    gt_boxes: tuple[tuple[BoundingBox, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "gt_boxes", tuple(tuple(g) for g in self.gt_boxes))
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")
        for _, identity in self.gt_boxes:
            if identity < 0:
                raise ValueError(f"ground-truth identity must be non-negative, got {identity}")
        dims = {d.feature.shape[0] for d in self.detections}
        if len(dims) > 1:
            raise ValueError(f"inconsistent feature dimensions within frame: {sorted(dims)}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and self.camera_id == other.camera_id
            and self.detections == other.detections
            and self.gt_boxes == other.gt_boxes
        )
