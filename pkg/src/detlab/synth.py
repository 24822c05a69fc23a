"""Synthetic dataset generation for desk-scale assignment studies.

Ground-truth boxes are laid out on a disjoint grid per image (so anchors
never fall inside a foreign ground truth and one-to-one claims never
collide), and predictions are jittered around them. Identical seeds give
identical datasets, byte for byte once serialized.

Noise profiles:

* ``perfect``: the first prediction of every ground truth is an exact
  copy with class score 1 (others capped below 1), so the best candidate
  is unambiguous.
* ``standard``: all predictions are jittered copies whose class score is
  correlated with their actual IoU plus uniform noise.
* ``adversarial-ordering``: every ground truth gets one high-IoU /
  low-score and one low-IoU / high-score prediction, chosen so that
  metric orderings with exponents (0.5, 6) and (0.5, 2) disagree; any
  remaining predictions are inert fillers far from every box.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import BoundingBox, iou

__all__ = ["PROFILES", "CANVAS", "generate_synthetic"]

PROFILES = ("perfect", "standard", "adversarial-ordering")
CANVAS = 640.0

# IoU / class-score pairs whose metric order flips between beta=2 and
# beta=6 at alpha=0.5: (0.9, 0.7) wins at beta=2, (0.1, 0.95) at beta=6.
_ADV_HIGH_IOU = (0.95, 0.1)
_ADV_LOW_IOU = (0.7, 0.9)


def _gt_box(rng: np.random.Generator, cx0: float, cy0: float, cell: float) -> tuple[float, ...]:
    margin = 0.05 * cell
    w = cell * (0.4 + 0.2 * rng.uniform())
    h = cell * (0.4 + 0.2 * rng.uniform())
    x0 = cx0 + margin + rng.uniform() * (cell - w - 2 * margin)
    y0 = cy0 + margin + rng.uniform() * (cell - h - 2 * margin)
    return (float(x0), float(y0), float(x0 + w), float(y0 + h))


def _pred(box: tuple[float, ...], scores: list[float], stride: float = 8.0) -> dict:
    cx = (box[0] + box[2]) / 2.0
    cy = (box[1] + box[3]) / 2.0
    return {
        "anchor": [float(cx), float(cy)],
        "stride": stride,
        "box": [float(v) for v in box],
        "scores": scores,
    }


def _scores(rng, num_classes: int, class_id: int, p: float, other_hi: float) -> list[float]:
    scores = [float(v) for v in rng.uniform(0.0, other_hi, num_classes)]
    scores[class_id] = float(p)
    return scores


def _jittered(rng, gt: tuple[float, ...], sigma: float) -> tuple[float, ...]:
    w = gt[2] - gt[0]
    h = gt[3] - gt[1]
    noise = rng.normal(0.0, sigma, 4)
    x0 = gt[0] + noise[0] * w
    y0 = gt[1] + noise[1] * h
    x1 = gt[2] + noise[2] * w
    y1 = gt[3] + noise[3] * h
    if x0 > x1:
        x0, x1 = x1, x0
    if y0 > y1:
        y0, y1 = y1, y0
    return (float(x0), float(y0), float(x1), float(y1))


def _corner_fraction_box(gt: tuple[float, ...], fraction: float) -> tuple[float, ...]:
    """Sub-box sharing the top-left corner with exactly ``fraction`` IoU."""
    return (gt[0], gt[1], gt[2], gt[1] + fraction * (gt[3] - gt[1]))


def generate_synthetic(
    seed: int,
    num_images: int,
    gts_per_image: int,
    preds_per_gt: int,
    noise_profile: str = "standard",
    num_classes: int = 8,
) -> dict:
    """Build a dataset dict ready for canonical serialization."""
    if noise_profile not in PROFILES:
        raise ValueError(f"unknown noise profile {noise_profile!r}; choose from {PROFILES}")
    if min(num_images, gts_per_image, preds_per_gt, num_classes) < 1:
        raise ValueError("all counts must be positive")
    rng = np.random.default_rng(seed)
    grid = math.ceil(math.sqrt(gts_per_image))
    cell = CANVAS / grid
    margin = 0.05 * cell

    images = []
    for image_id in range(num_images):
        gts = []
        preds = []
        for g in range(gts_per_image):
            cx0 = (g % grid) * cell
            cy0 = (g // grid) * cell
            gt = _gt_box(rng, cx0, cy0, cell)
            class_id = int(rng.integers(0, num_classes))
            gts.append({"box": [float(v) for v in gt], "class": class_id})

            if noise_profile == "perfect":
                preds.append(_pred(gt, _scores(rng, num_classes, class_id, 1.0, 0.2)))
                for _ in range(preds_per_gt - 1):
                    box = _jittered(rng, gt, 0.1)
                    p = min(0.95, float(rng.uniform(0.05, 0.95)))
                    preds.append(_pred(box, _scores(rng, num_classes, class_id, p, 0.2)))
            elif noise_profile == "standard":
                for _ in range(preds_per_gt):
                    box = _jittered(rng, gt, 0.15)
                    overlap = iou(BoundingBox(*box), BoundingBox(*gt))
                    p = min(1.0, max(0.0, 0.65 * overlap + 0.35 * float(rng.uniform())))
                    preds.append(_pred(box, _scores(rng, num_classes, class_id, p, 0.3)))
            else:
                for frac, p in (_ADV_HIGH_IOU, _ADV_LOW_IOU):
                    box = _corner_fraction_box(gt, frac)
                    preds.append(_pred(box, _scores(rng, num_classes, class_id, p, 0.0)))
                for _ in range(max(0, preds_per_gt - 2)):
                    filler = (0.1, 0.1, 0.1 + 0.4 * margin, 0.1 + 0.4 * margin)
                    p = float(rng.uniform(0.005, 0.02))
                    preds.append(_pred(filler, _scores(rng, num_classes, class_id, p, 0.0)))
        images.append({"id": image_id, "gts": gts, "preds": preds})

    return {
        "metadata": {"num_classes": num_classes, "coordinate_frame": "pixels"},
        "images": images,
    }
