"""Greedy NMS, NMS-free top-k selection, and a timing harness for both.

The NMS path decodes every prediction into a detection record and then
suppresses overlaps; the NMS-free path just keeps the top-scoring
predictions, relying on one-to-one training to have removed duplicates.
Both are pure functions of their inputs; score ties always break toward
the lower index so results are reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .assignment import Prediction
from .errors import InternalError
from .geometry import BoundingBox

__all__ = [
    "Detection",
    "nms",
    "decode_predictions",
    "nms_free_select",
    "PathTiming",
    "BenchReport",
    "bench_postprocess",
]


@dataclass(frozen=True)
class Detection:
    """One decoded detection; source_index points back at the prediction."""

    box: BoundingBox
    score: float
    class_id: int
    source_index: int

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def nms(
    dets: Sequence[Detection],
    iou_thresh: float,
    score_thresh: float = 0.0,
    max_det: int = 300,
    class_agnostic: bool = False,
) -> list[int]:
    """Greedy non-maximum suppression.

    Drops detections scoring below ``score_thresh``, sorts the rest by
    descending score (ties by lower list index), then repeatedly keeps the
    top survivor and suppresses later ones of the same class (any class
    when ``class_agnostic``) whose IoU with it exceeds ``iou_thresh``.

    Returns indices into ``dets`` in keep order, at most ``max_det``.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1), got {iou_thresh}")
    if not 0.0 <= score_thresh <= 1.0:
        raise ValueError(f"score_thresh must be in [0, 1], got {score_thresh}")
    if max_det < 1:
        raise ValueError(f"max_det must be positive, got {max_det}")
    if not dets:
        return []
    order = sorted(
        (i for i, d in enumerate(dets) if d.score >= score_thresh),
        key=lambda i: (-dets[i].score, i),
    )
    if not order:
        return []
    boxes = np.array(
        [[dets[i].box.x_min, dets[i].box.y_min, dets[i].box.x_max, dets[i].box.y_max] for i in order],
        dtype=np.float64,
    ).reshape(-1, 4)
    classes = np.array([dets[i].class_id for i in order], dtype=np.int64)
    kept = _kernels.nms_greedy(boxes, classes, float(iou_thresh), bool(class_agnostic), int(max_det))
    return [order[k] for k in kept]


def decode_predictions(preds: Sequence[Prediction], start_index: int = 0) -> list[Detection]:
    """Turn raw predictions into detections: score/class = best class score."""
    out = []
    for offset, pred in enumerate(preds):
        scores = pred.scores
        best = 0
        for j in range(1, len(scores)):
            if scores[j] > scores[best]:
                best = j
        out.append(Detection(pred.box, scores[best], best, start_index + offset))
    return out


def nms_free_select(
    preds: Sequence[Prediction],
    score_thresh: float = 0.0,
    max_det: int = 300,
) -> list[Detection]:
    """Top-``max_det`` decoded detections by score; no suppression at all.

    Overlapping detections are deliberately left in place (duplicate
    removal is the training-time one-to-one head's job). Ties break toward
    the lower prediction index. Unlike the NMS path, which must decode
    every candidate before suppressing, only the returned detections are
    materialized.
    """
    if not 0.0 <= score_thresh <= 1.0:
        raise ValueError(f"score_thresh must be in [0, 1], got {score_thresh}")
    if max_det < 1:
        raise ValueError(f"max_det must be positive, got {max_det}")
    scored = []
    for i, pred in enumerate(preds):
        scores = pred.scores
        best = 0
        for j in range(1, len(scores)):
            if scores[j] > scores[best]:
                best = j
        if scores[best] >= score_thresh:
            scored.append((i, best, scores[best]))
    scored.sort(key=lambda t: (-t[2], t[0]))
    return [Detection(preds[i].box, s, cls, i) for i, cls, s in scored[:max_det]]


@dataclass(frozen=True)
class PathTiming:
    """Wall-time stats (microseconds) of one post-processing path."""

    path: str
    images: int
    mean_us: float
    median_us: float
    p99_us: float


@dataclass(frozen=True)
class BenchReport:
    timings: tuple[PathTiming, ...]
    repeats: int

    def to_csv(self) -> str:
        lines = ["path,images,mean_us,median_us,p99_us"]
        for t in self.timings:
            lines.append(
                f"{t.path},{t.images},{t.mean_us:.3f},{t.median_us:.3f},{t.p99_us:.3f}"
            )
        return "\n".join(lines) + "\n"


def _stats(path: str, images: int, samples_ns: list[int]) -> PathTiming:
    us = np.asarray(samples_ns, dtype=np.float64) / 1e3
    return PathTiming(
        path,
        images,
        float(np.mean(us)),
        float(np.median(us)),
        float(np.percentile(us, 99)),
    )


def bench_postprocess(
    images: Sequence[Sequence[Prediction]],
    nms_config: dict,
    select_config: dict,
    repeats: int = 5,
) -> BenchReport:
    """Time the NMS path against the NMS-free path on the same images.

    Each path runs ``repeats`` times over every image with a monotonic
    clock; (de)serialization stays outside the timed region. Outputs must
    be identical across repeats (the paths are pure) or InternalError is
    raised. One sample is one (image, repeat) pair.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be at least 3, got {repeats}")

    def nms_path(preds):
        dets = decode_predictions(preds)
        kept = nms(dets, **nms_config)
        return tuple(kept)

    def select_path(preds):
        chosen = nms_free_select(preds, **select_config)
        return tuple(d.source_index for d in chosen)

    timings = []
    for name, fn in (("nms", nms_path), ("nms_free", select_path)):
        samples: list[int] = []
        reference: list = []
        for rep in range(repeats):
            outputs = []
            for preds in images:
                t0 = time.perf_counter_ns()
                out = fn(preds)
                t1 = time.perf_counter_ns()
                samples.append(t1 - t0)
                outputs.append(out)
            if rep == 0:
                reference = outputs
            elif outputs != reference:
                raise InternalError(f"{name} outputs changed across repeats")
        timings.append(_stats(name, len(images), samples))
    return BenchReport(tuple(timings), repeats)
