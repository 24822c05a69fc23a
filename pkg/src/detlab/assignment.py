"""Consistent dual label assignment.

One ground truth supervises many predictions under the one-to-many rule
and exactly one under the one-to-one rule; both rank prediction-GT pairs
with the same metric family

    metric = spatial_prior * class_score^alpha * iou^beta.

Scaling (alpha, beta) by a common positive factor raises the one-to-many
metric to a power, which preserves its ordering, so both rules pick the
same best prediction; :func:`supervision_gap` quantifies how far apart
the two rules' soft classification targets are for a given ground truth,
and :func:`alignment_frequency` measures how often the one-to-one pick
lands in the one-to-many top-k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyPredictionsError, LengthMismatchError, MissingMatchError
from .geometry import AnchorPoint, BoundingBox, iou, spatial_prior

__all__ = [
    "MetricParams",
    "Prediction",
    "GroundTruthInstance",
    "GTAssignment",
    "AssignmentResult",
    "GapReport",
    "matching_metric",
    "assign_one_to_many",
    "assign_one_to_one",
    "supervision_gap",
    "gap_oracle",
    "target_vector",
    "consistency_ratio",
    "alignment_frequency",
]


@dataclass(frozen=True)
class MetricParams:
    """Exponents balancing the classification and localization terms."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be positive: {self}")

    def scaled(self, r: float) -> "MetricParams":
        """Consistent counterpart params (alpha, beta) * r."""
        return MetricParams(self.alpha * r, self.beta * r)


@dataclass(frozen=True)
class Prediction:
    """One predicted box with its anchor and per-class scores."""

    anchor: AnchorPoint
    box: BoundingBox
    scores: tuple[float, ...]

    def __post_init__(self):
        if not self.scores:
            raise ValueError("scores must be non-empty")
        if any(not (0.0 <= s <= 1.0) for s in self.scores):
            raise ValueError(f"scores must lie in [0, 1]: {self.scores}")


@dataclass(frozen=True)
class GroundTruthInstance:
    box: BoundingBox
    class_id: int

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class GTAssignment:
    """Positive set of one ground truth, ordered by descending metric.

    ``best_iou`` is the largest IoU over *all* predictions and ``best_metric``
    the largest metric over all predictions; targets are
    best_iou * metric / best_metric, so the top member's target equals
    best_iou exactly.
    """

    positives: tuple[int, ...]
    metrics: tuple[float, ...]
    targets: tuple[float, ...]
    best_iou: float
    best_metric: float


@dataclass(frozen=True)
class AssignmentResult:
    """Per-ground-truth assignments for one image."""

    per_gt: tuple[GTAssignment, ...]


@dataclass(frozen=True)
class GapReport:
    """Classification-target gap between the two heads for one ground truth."""

    gap: float
    one_to_one_target: float
    pick_in_positives: bool
    pick_one_to_many_target: float
    rest_target_sum: float


def matching_metric(p_class: float, iou_val: float, s: int, params: MetricParams) -> float:
    """s * p^alpha * iou^beta with the convention 0^positive = 0."""
    if s == 0:
        return 0.0
    return math.pow(p_class, params.alpha) * math.pow(iou_val, params.beta)


def _pair_stats(preds: Sequence[Prediction], gt: GroundTruthInstance, params: MetricParams):
    """(ious, metrics, best_iou, best_metric) for one ground truth."""
    ious = []
    metrics = []
    for pred in preds:
        if gt.class_id >= len(pred.scores):
            raise ValueError(f"class_id {gt.class_id} out of range for {len(pred.scores)} scores")
        iou_val = iou(pred.box, gt.box)
        s = spatial_prior(pred.anchor, gt.box)
        ious.append(iou_val)
        metrics.append(matching_metric(pred.scores[gt.class_id], iou_val, s, params))
    return ious, metrics, max(ious), max(metrics)


def _require_preds(preds: Sequence[Prediction]) -> None:
    if not preds:
        raise EmptyPredictionsError("assignment needs at least one prediction")


def assign_one_to_many(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruthInstance],
    params: MetricParams,
    topk: int = 10,
) -> AssignmentResult:
    """Top-k positive samples per ground truth with soft targets.

    Candidates are the predictions with spatial prior 1 and positive
    metric; the up-to-``topk`` highest-metric candidates (ties broken by
    lower index) become the positive set. Each positive's target is
    best_iou * metric / best_metric. A ground truth whose best metric is 0
    gets an empty set.
    """
    _require_preds(preds)
    if topk < 1:
        raise ValueError(f"topk must be positive, got {topk}")
    per_gt = []
    for gt in gts:
        _ious, metrics, best_iou, best_metric = _pair_stats(preds, gt, params)
        if best_metric <= 0.0:
            per_gt.append(GTAssignment((), (), (), best_iou, best_metric))
            continue
        candidates = sorted(
            (j for j, m in enumerate(metrics) if m > 0.0),
            key=lambda j: (-metrics[j], j),
        )[:topk]
        chosen_metrics = tuple(metrics[j] for j in candidates)
        targets = tuple(best_iou * (m / best_metric) for m in chosen_metrics)
        per_gt.append(GTAssignment(tuple(candidates), chosen_metrics, targets, best_iou, best_metric))
    return AssignmentResult(tuple(per_gt))


def assign_one_to_one(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruthInstance],
    params: MetricParams,
) -> AssignmentResult:
    """Top-1 selection per ground truth, injective across ground truths.

    Ground truths claim predictions greedily in dataset order: each takes
    its highest-metric unclaimed candidate (spatial prior 1, metric > 0;
    ties broken by lower index) and later ground truths cannot reuse it.
    The matched prediction's target is best_iou. Ground truths with no
    eligible candidate are left unmatched.
    """
    _require_preds(preds)
    claimed: set[int] = set()
    per_gt = []
    for gt in gts:
        _ious, metrics, best_iou, best_metric = _pair_stats(preds, gt, params)
        pick = None
        pick_metric = 0.0
        for j, m in enumerate(metrics):
            if m <= 0.0 or j in claimed:
                continue
            if pick is None or m > pick_metric:
                pick = j
                pick_metric = m
        if pick is None:
            per_gt.append(GTAssignment((), (), (), best_iou, best_metric))
        else:
            claimed.add(pick)
            per_gt.append(
                GTAssignment((pick,), (pick_metric,), (best_iou,), best_iou, best_metric)
            )
    return AssignmentResult(tuple(per_gt))


def supervision_gap(o2m: AssignmentResult, o2o: AssignmentResult, gt_index: int) -> GapReport:
    """Target-vector distance between the two heads for one ground truth.

    Both results must come from the same predictions and ground truths.
    The gap is the 1-Wasserstein distance of the two heads' per-prediction
    classification-target vectors:

        gap = t_one_to_one - [pick in positives] * t_one_to_many(pick)
              + sum of remaining one-to-many targets.

    Raises MissingMatchError when the one-to-one head left this ground
    truth unmatched.
    """
    many = o2m.per_gt[gt_index]
    one = o2o.per_gt[gt_index]
    if not one.positives:
        raise MissingMatchError(f"one-to-one head has no match for ground truth {gt_index}")
    pick = one.positives[0]
    pick_target_o2o = one.targets[0]
    in_positives = pick in many.positives
    pick_target_o2m = many.targets[many.positives.index(pick)] if in_positives else 0.0
    rest = sum(t for j, t in zip(many.positives, many.targets) if j != pick)
    gap = pick_target_o2o - pick_target_o2m + rest
    return GapReport(gap, pick_target_o2o, in_positives, pick_target_o2m, rest)


def gap_oracle(o2m_targets: Sequence[float], o2o_targets: Sequence[float]) -> float:
    """Brute-force gap: sum of |t_one_to_one - t_one_to_many| per prediction."""
    if len(o2m_targets) != len(o2o_targets):
        raise LengthMismatchError(
            f"target vectors differ in length: {len(o2m_targets)} vs {len(o2o_targets)}"
        )
    total = 0.0
    for a, b in zip(o2m_targets, o2o_targets):
        total += abs(b - a)
    return total


def target_vector(result: AssignmentResult, gt_index: int, num_preds: int) -> list[float]:
    """Dense per-prediction target vector for one ground truth (zeros elsewhere)."""
    entry = result.per_gt[gt_index]
    vec = [0.0] * num_preds
    for j, t in zip(entry.positives, entry.targets):
        vec[j] = t
    return vec


def consistency_ratio(o2m: MetricParams, o2o: MetricParams) -> float | None:
    """The common ratio r with (alpha_o2o, beta_o2o) = r * (alpha_o2m, beta_o2m).

    Returns None when the two ratios disagree beyond 1e-9 relative
    tolerance; equal params give exactly 1.0.
    """
    r_alpha = o2o.alpha / o2m.alpha
    r_beta = o2o.beta / o2m.beta
    if math.isclose(r_alpha, r_beta, rel_tol=1e-9, abs_tol=0.0):
        return r_alpha
    return None


def alignment_frequency(
    o2m: AssignmentResult,
    o2o: AssignmentResult,
    ks: Iterable[int],
) -> dict[int, float]:
    """Fraction of ground truths whose one-to-one pick is in the o2m top-k.

    Both results must come from identical inputs. Unmatched ground truths
    count as misses; with zero ground truths every frequency is 0.0.
    """
    if len(o2m.per_gt) != len(o2o.per_gt):
        raise LengthMismatchError(
            f"results cover different ground-truth counts: {len(o2m.per_gt)} vs {len(o2o.per_gt)}"
        )
    ks = list(ks)
    if any(k < 1 for k in ks):
        raise ValueError(f"every k must be positive: {ks}")
    n_gts = len(o2m.per_gt)
    freqs: dict[int, float] = {}
    for k in ks:
        hits = 0
        for many, one in zip(o2m.per_gt, o2o.per_gt):
            if one.positives and one.positives[0] in many.positives[:k]:
                hits += 1
        freqs[k] = hits / n_gts if n_gts else 0.0
    return freqs
