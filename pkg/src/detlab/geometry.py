"""Axis-aligned boxes, anchor points, IoU, and the binary spatial prior.

All geometry is 64-bit float in a single shared coordinate frame (pixels
or normalized); the library never mixes frames within one dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["BoundingBox", "AnchorPoint", "iou", "spatial_prior"]


@dataclass(frozen=True)
class BoundingBox:
    """Corner-form box: (x_min, y_min) top-left, (x_max, y_max) bottom-right."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"box corners out of order: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class AnchorPoint:
    """Anchor point of a prediction; stride is the feature-map cell size."""

    x: float
    y: float
    stride: float = 1.0

    def __post_init__(self):
        if not self.stride > 0:
            raise ValueError(f"stride must be positive, got {self.stride}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in [0, 1]; 0.0 when the union has zero area."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def spatial_prior(anchor: AnchorPoint, gt: BoundingBox) -> int:
    """1 if the anchor point lies inside the box, else 0.

    Containment is half-open, [x_min, x_max) x [y_min, y_max), so a point on
    the shared edge of two abutting boxes belongs to exactly one of them.
    """
    inside = gt.x_min <= anchor.x < gt.x_max and gt.y_min <= anchor.y < gt.y_max
    return 1 if inside else 0
