"""Report builders behind the CLI subcommands.

Per-image work fans out over a thread pool sized by the config's worker
count; results are merged in image-id order, so reports are byte-identical
regardless of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np

from .assignment import (
    AssignmentResult,
    GTAssignment,
    assign_one_to_many,
    assign_one_to_one,
    consistency_ratio,
    supervision_gap,
)
from .blocks import BlockSpec
from .costs import count_cost
from .dataio import Dataset, ImageSample, RunConfig
from .errors import ConfigError, MissingWeightError
from .postprocess import BenchReport, bench_postprocess
from .rank_design import RankReport, StageRank, rank_guided_allocate, stage_ranks
from .tensor_ops import bn_fold, reparam_fuse_lk

ALIGNMENT_KS = (1, 5, 10)

_EMPTY = GTAssignment((), (), (), 0.0, 0.0)


def _entry_to_dict(entry: GTAssignment) -> dict:
    return {
        "positives": list(entry.positives),
        "metrics": list(entry.metrics),
        "targets": list(entry.targets),
        "best_iou": entry.best_iou,
        "best_metric": entry.best_metric,
    }


def _assign_image(image: ImageSample, cfg: RunConfig):
    """Assignment results and per-GT gaps for one image, both o2o variants."""
    n_gts = len(image.gts)
    if not image.preds:
        empty = AssignmentResult(tuple([_EMPTY] * n_gts))
        return image, empty, empty, empty
    o2m = assign_one_to_many(image.preds, image.gts, cfg.o2m_params, cfg.topk)
    o2o_cfg = assign_one_to_one(image.preds, image.gts, cfg.o2o_params)
    o2o_cons = assign_one_to_one(image.preds, image.gts, cfg.o2m_params)
    return image, o2m, o2o_cfg, o2o_cons


def _gaps(o2m: AssignmentResult, o2o: AssignmentResult) -> list[float | None]:
    out: list[float | None] = []
    for gt_index, entry in enumerate(o2o.per_gt):
        if entry.positives:
            out.append(supervision_gap(o2m, o2o, gt_index).gap)
        else:
            out.append(None)
    return out


def _map_images(images, fn, workers: int):
    if workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, images))
    return [fn(img) for img in images]


def assignment_report(ds: Dataset, cfg: RunConfig) -> dict:
    """Per-image assignments plus aggregate alignment and gap statistics.

    Alignment frequencies (top-1/5/10) and mean gaps are reported side by
    side for the configured one-to-one params and for the consistent
    variant (one-to-one params equal to the one-to-many ones).
    """
    rows = _map_images(ds.images, lambda img: _assign_image(img, cfg), cfg.workers)

    hits = {name: {k: 0 for k in ALIGNMENT_KS} for name in ("consistent", "configured")}
    gap_sum = {"consistent": 0.0, "configured": 0.0}
    matched = {"consistent": 0, "configured": 0}
    total_gts = 0
    image_entries = []
    for image, o2m, o2o_cfg, o2o_cons in rows:
        total_gts += len(image.gts)
        variant_gaps = {}
        for name, o2o in (("consistent", o2o_cons), ("configured", o2o_cfg)):
            for many, one in zip(o2m.per_gt, o2o.per_gt):
                for k in ALIGNMENT_KS:
                    if one.positives and one.positives[0] in many.positives[:k]:
                        hits[name][k] += 1
            gaps = _gaps(o2m, o2o)
            for g in gaps:
                if g is not None:
                    gap_sum[name] += g
                    matched[name] += 1
            variant_gaps[name] = gaps
        image_entries.append(
            {
                "id": image.image_id,
                "one_to_many": [_entry_to_dict(e) for e in o2m.per_gt],
                "one_to_one": [_entry_to_dict(e) for e in o2o_cfg.per_gt],
                "one_to_one_consistent": [_entry_to_dict(e) for e in o2o_cons.per_gt],
                "gaps": variant_gaps["configured"],
            }
        )

    def freqs(name: str) -> dict:
        return {
            f"top{k}": (hits[name][k] / total_gts if total_gts else 0.0) for k in ALIGNMENT_KS
        }

    return {
        "num_images": len(ds.images),
        "num_gts": total_gts,
        "params": {
            "one_to_many": {"alpha": cfg.o2m_alpha, "beta": cfg.o2m_beta, "topk": cfg.topk},
            "one_to_one": {"alpha": cfg.o2o_alpha, "beta": cfg.o2o_beta},
            "consistency_ratio": consistency_ratio(cfg.o2m_params, cfg.o2o_params),
        },
        "alignment": {"consistent": freqs("consistent"), "configured": freqs("configured")},
        "mean_gap": {
            name: (gap_sum[name] / matched[name] if matched[name] else None)
            for name in ("consistent", "configured")
        },
        "matched_gts": dict(matched),
        "images": image_entries,
    }


def gap_report(ds: Dataset, cfg: RunConfig) -> dict:
    """Per-ground-truth supervision gaps under the configured params."""
    rows = _map_images(ds.images, lambda img: _assign_image(img, cfg), cfg.workers)
    gaps = []
    matched = 0
    total = 0
    gap_sum = 0.0
    for image, o2m, o2o_cfg, _o2o_cons in rows:
        total += len(image.gts)
        for gt_index, entry in enumerate(o2o_cfg.per_gt):
            if not entry.positives:
                continue
            report = supervision_gap(o2m, o2o_cfg, gt_index)
            matched += 1
            gap_sum += report.gap
            gaps.append(
                {
                    "image_id": image.image_id,
                    "gt_index": gt_index,
                    "gap": report.gap,
                    "one_to_one_target": report.one_to_one_target,
                    "pick_in_positives": report.pick_in_positives,
                    "pick_one_to_many_target": report.pick_one_to_many_target,
                    "rest_target_sum": report.rest_target_sum,
                }
            )
    return {
        "num_gts": total,
        "matched": matched,
        "unmatched": total - matched,
        "mean_gap": gap_sum / matched if matched else None,
        "gaps": gaps,
    }


_COST_COLUMNS = "kind,H,W,C,macs,params,formula_macs,formula_params"


def cost_table(spec_rows: Sequence[dict]) -> str:
    """CSV of cost reports for a list of block-spec dicts."""
    lines = [_COST_COLUMNS]
    for i, row in enumerate(spec_rows):
        where = f"specs[{i}]"
        if not isinstance(row, dict):
            raise ConfigError(f"{where}: must be an object")
        kwargs = {}
        for key in ("kind", "h", "w", "c", "num_classes", "n_psa"):
            if key in row:
                kwargs[key] = row[key]
        unknown = set(row) - {"kind", "h", "w", "c", "num_classes", "n_psa"}
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        try:
            spec = BlockSpec(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        report = count_cost(spec)
        fm = "" if report.formula_macs is None else str(report.formula_macs)
        fp = "" if report.formula_params is None else str(report.formula_params)
        lines.append(f"{spec.kind},{spec.h},{spec.w},{spec.c},{report.macs},{report.params},{fm},{fp}")
    return "\n".join(lines) + "\n"


def bench_report(ds: Dataset, cfg: RunConfig, repeats: int, class_agnostic: bool = False) -> BenchReport:
    images = [img.preds for img in ds.images]
    nms_config = {
        "iou_thresh": cfg.nms_iou_thresh,
        "score_thresh": cfg.nms_score_thresh,
        "max_det": cfg.max_det,
        "class_agnostic": class_agnostic,
    }
    select_config = {"score_thresh": cfg.nms_score_thresh, "max_det": cfg.max_det}
    return bench_postprocess(images, nms_config, select_config, repeats)


def _branch_weights(tensors: Mapping[str, np.ndarray], name: str, fold: bool):
    if name not in tensors:
        raise MissingWeightError(f"archive is missing tensor {name!r}")
    w = tensors[name]
    b = tensors.get(f"{name}_bias")
    if fold:
        stats = []
        for stat in ("gamma", "beta", "mean", "var"):
            key = f"{name}_{stat}"
            if key not in tensors:
                raise MissingWeightError(f"--fold-bn needs tensor {key!r}")
            stats.append(tensors[key])
        w, b = bn_fold(w, b, *stats)
    return w, b


def fuse_archive(
    tensors: Mapping[str, np.ndarray],
    dw7_name: str = "dw7",
    dw3_name: str = "dw3",
    fused_name: str = "fused",
    fold_bn: bool = False,
) -> dict[str, np.ndarray]:
    """Fuse a 7x7 + 3x3 depthwise branch pair into one deployable weight.

    With ``fold_bn``, per-branch batch-norm statistics (``<name>_gamma``
    etc.) are folded into each branch first. The fused bias is emitted
    whenever either branch carries one.
    """
    w7, b7 = _branch_weights(tensors, dw7_name, fold_bn)
    w3, b3 = _branch_weights(tensors, dw3_name, fold_bn)
    fused = reparam_fuse_lk(w7, w3)
    out = {fused_name: fused}
    if b7 is not None or b3 is not None:
        c = fused.shape[0]
        total = np.zeros(c, dtype=np.float64)
        if b7 is not None:
            total = total + np.asarray(b7, dtype=np.float64)
        if b3 is not None:
            total = total + np.asarray(b3, dtype=np.float64)
        out[f"{fused_name}_bias"] = total
    return out


def parse_stage_manifest(rows: Sequence[dict]) -> list[tuple[int, str, int | None]]:
    manifest = []
    for i, row in enumerate(rows):
        where = f"stages[{i}]"
        if not isinstance(row, dict):
            raise ConfigError(f"{where}: must be an object")
        stage_id = row.get("stage_id")
        weight = row.get("weight")
        if not isinstance(stage_id, int) or isinstance(stage_id, bool):
            raise ConfigError(f"{where}.stage_id: expected an integer")
        if not isinstance(weight, str):
            raise ConfigError(f"{where}.weight: expected a tensor name")
        c_out = row.get("c_out")
        if c_out is not None and (not isinstance(c_out, int) or c_out < 1):
            raise ConfigError(f"{where}.c_out: expected a positive integer")
        manifest.append((stage_id, weight, c_out))
    return manifest


def rank_report_from_archive(
    tensors: Mapping[str, np.ndarray],
    stage_rows: Sequence[dict],
    threshold_ratio: float = 0.5,
) -> RankReport:
    return stage_ranks(tensors, parse_stage_manifest(stage_rows), threshold_ratio)


def rank_report_from_dict(obj: dict) -> RankReport:
    rows = obj.get("stages") if isinstance(obj, dict) else None
    if not isinstance(rows, list) or not rows:
        raise ConfigError("rank report must contain a non-empty 'stages' list")
    stages = []
    for i, row in enumerate(rows):
        try:
            stages.append(
                StageRank(
                    int(row["stage_id"]),
                    int(row["c_out"]),
                    int(row["rank"]),
                    float(row["normalized_rank"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"stages[{i}]: {exc}") from exc
    return RankReport(tuple(stages))


def rank_csv(report: RankReport) -> str:
    lines = ["stage_id,rank,normalized_rank"]
    for s in report.stages:
        lines.append(f"{s.stage_id},{s.rank},{s.normalized:.17g}")
    return "\n".join(lines) + "\n"


def allocation_report(ranks: RankReport, evaluator, baseline: float) -> dict:
    trace = rank_guided_allocate(ranks, evaluator, baseline)
    out = trace.to_dict()
    out["baseline"] = baseline
    out["evaluator_calls"] = len(trace.steps)
    return out
