"""Dataset files and run configuration.

A dataset file is JSON:

    {"metadata": {"num_classes": int, "coordinate_frame": str},
     "images": [{"id": int,
                 "gts":  [{"box": [x0, y0, x1, y1], "class": int}, ...],
                 "preds": [{"anchor": [x, y], "stride": float,
                            "box": [x0, y0, x1, y1],
                            "scores": [float, ...]}, ...]}, ...]}

Every class id must be below num_classes and every scores vector exactly
num_classes long. Parse failures raise ParseError naming the offending
field. Config precedence is CLI flags > config file > defaults, except the
worker count, where the DETLAB_WORKERS environment variable wins.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .assignment import GroundTruthInstance, MetricParams, Prediction
from .errors import ConfigError, ParseError
from .geometry import AnchorPoint, BoundingBox
from .serialize import load_json

__all__ = ["ImageSample", "Dataset", "parse_dataset", "dataset_to_dict", "RunConfig", "load_config"]


@dataclass(frozen=True)
class ImageSample:
    image_id: int
    gts: tuple[GroundTruthInstance, ...]
    preds: tuple[Prediction, ...]


@dataclass(frozen=True)
class Dataset:
    num_classes: int
    coordinate_frame: str
    images: tuple[ImageSample, ...]


def _number(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ParseError(f"{where}: expected a number, got {obj!r}")
    return float(obj)


def _box(obj, where: str) -> BoundingBox:
    if not isinstance(obj, list) or len(obj) != 4:
        raise ParseError(f"{where}: box must be a list of 4 numbers")
    vals = [_number(v, where) for v in obj]
    try:
        return BoundingBox(*vals)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _parse_gt(obj, num_classes: int, where: str) -> GroundTruthInstance:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: must be an object")
    box = _box(obj.get("box"), f"{where}.box")
    class_id = obj.get("class")
    if not isinstance(class_id, int) or isinstance(class_id, bool):
        raise ParseError(f"{where}.class: expected an integer")
    if not 0 <= class_id < num_classes:
        raise ParseError(f"{where}.class: {class_id} out of range for {num_classes} classes")
    return GroundTruthInstance(box, class_id)


def _parse_pred(obj, num_classes: int, where: str) -> Prediction:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: must be an object")
    anchor = obj.get("anchor")
    if not isinstance(anchor, list) or len(anchor) != 2:
        raise ParseError(f"{where}.anchor: must be a list of 2 numbers")
    stride = _number(obj.get("stride", 1.0), f"{where}.stride")
    box = _box(obj.get("box"), f"{where}.box")
    scores = obj.get("scores")
    if not isinstance(scores, list) or len(scores) != num_classes:
        raise ParseError(f"{where}.scores: must be a list of exactly {num_classes} numbers")
    values = tuple(_number(s, f"{where}.scores[{i}]") for i, s in enumerate(scores))
    try:
        return Prediction(
            AnchorPoint(_number(anchor[0], f"{where}.anchor[0]"), _number(anchor[1], f"{where}.anchor[1]"), stride),
            box,
            values,
        )
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def parse_dataset(obj) -> Dataset:
    """Validate a dataset dict (or file path) into typed records."""
    if isinstance(obj, (str, Path)):
        obj = load_json(obj)
    if not isinstance(obj, dict):
        raise ParseError("dataset: top level must be an object")
    meta = obj.get("metadata")
    if not isinstance(meta, dict):
        raise ParseError("dataset.metadata: missing or not an object")
    num_classes = meta.get("num_classes")
    if not isinstance(num_classes, int) or num_classes < 1:
        raise ParseError("dataset.metadata.num_classes: expected a positive integer")
    frame = meta.get("coordinate_frame", "pixels")
    if not isinstance(frame, str):
        raise ParseError("dataset.metadata.coordinate_frame: expected a string")
    images_obj = obj.get("images")
    if not isinstance(images_obj, list):
        raise ParseError("dataset.images: expected a list")
    images = []
    seen_ids: set[int] = set()
    for i, img in enumerate(images_obj):
        where = f"images[{i}]"
        if not isinstance(img, dict):
            raise ParseError(f"{where}: must be an object")
        image_id = img.get("id", i)
        if not isinstance(image_id, int) or isinstance(image_id, bool):
            raise ParseError(f"{where}.id: expected an integer")
        if image_id in seen_ids:
            raise ParseError(f"{where}.id: duplicate image id {image_id}")
        seen_ids.add(image_id)
        gts = tuple(
            _parse_gt(g, num_classes, f"{where}.gts[{j}]") for j, g in enumerate(img.get("gts", []))
        )
        preds = tuple(
            _parse_pred(p, num_classes, f"{where}.preds[{j}]")
            for j, p in enumerate(img.get("preds", []))
        )
        images.append(ImageSample(image_id, gts, preds))
    images.sort(key=lambda s: s.image_id)
    return Dataset(num_classes, frame, tuple(images))


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "metadata": {"num_classes": ds.num_classes, "coordinate_frame": ds.coordinate_frame},
        "images": [
            {
                "id": img.image_id,
                "gts": [
                    {"box": [g.box.x_min, g.box.y_min, g.box.x_max, g.box.y_max], "class": g.class_id}
                    for g in img.gts
                ],
                "preds": [
                    {
                        "anchor": [p.anchor.x, p.anchor.y],
                        "stride": p.anchor.stride,
                        "box": [p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max],
                        "scores": list(p.scores),
                    }
                    for p in img.preds
                ],
            }
            for img in ds.images
        ],
    }


@dataclass(frozen=True)
class RunConfig:
    """Assignment and post-processing parameters with published defaults.

    The one-to-many defaults are alpha=0.5, beta=6 with the one-to-one
    head consistent at ratio 1 (same values). NMS defaults are local
    benchmark choices, not published numbers.
    """

    o2m_alpha: float = 0.5
    o2m_beta: float = 6.0
    topk: int = 10
    o2o_alpha: float = 0.5
    o2o_beta: float = 6.0
    nms_iou_thresh: float = 0.65
    nms_score_thresh: float = 0.05
    max_det: int = 300
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if min(self.o2m_alpha, self.o2m_beta, self.o2o_alpha, self.o2o_beta) <= 0:
            raise ConfigError("assignment exponents must be positive")
        if self.topk < 1:
            raise ConfigError(f"topk must be positive, got {self.topk}")
        if not 0.0 < self.nms_iou_thresh < 1.0:
            raise ConfigError(f"nms_iou_thresh must be in (0, 1), got {self.nms_iou_thresh}")
        if not 0.0 <= self.nms_score_thresh <= 1.0:
            raise ConfigError(f"nms_score_thresh must be in [0, 1], got {self.nms_score_thresh}")
        if self.max_det < 1:
            raise ConfigError(f"max_det must be positive, got {self.max_det}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")

    @property
    def o2m_params(self) -> MetricParams:
        return MetricParams(self.o2m_alpha, self.o2m_beta)

    @property
    def o2o_params(self) -> MetricParams:
        return MetricParams(self.o2o_alpha, self.o2o_beta)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_INT_FIELDS = {"topk", "max_det", "seed", "workers"}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional file, and overrides.

    ``overrides`` entries that are None are ignored. DETLAB_WORKERS, when
    set, wins over every other source of the worker count.
    """
    values = RunConfig().to_dict()
    known = set(values)
    if path is not None:
        file_obj = load_json(path)
        if not isinstance(file_obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        for key, val in file_obj.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            values[key] = val
    for key, val in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = val
    env_workers = os.environ.get("DETLAB_WORKERS")
    if env_workers:
        try:
            values["workers"] = int(env_workers)
        except ValueError as exc:
            raise ConfigError(f"DETLAB_WORKERS must be an integer, got {env_workers!r}") from exc
    for key in _INT_FIELDS:
        if not isinstance(values[key], int) or isinstance(values[key], bool):
            raise ConfigError(f"config key {key!r} must be an integer, got {values[key]!r}")
    for key in known - _INT_FIELDS:
        if isinstance(values[key], bool) or not isinstance(values[key], (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {values[key]!r}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
