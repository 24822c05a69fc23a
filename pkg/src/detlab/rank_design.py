"""Numerical-rank analysis of conv weights and rank-guided block allocation.

Singular values are computed in-repo with a one-sided Jacobi sweep (via
the kernel backend); the numerical rank of a weight is the number of
singular values strictly above ``threshold_ratio * sigma_max`` after
reshaping a (C_o, C_i/g, K, K) conv weight to (C_o, K^2 * C_i/g).

The allocation replay walks stages in ascending normalized rank and
cumulatively swaps in the compact block while an injected evaluator stays
at or above the baseline score, stopping at the first rejection.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, MissingWeightError, ShapeMismatchError, ZeroMatrixError

__all__ = [
    "singular_values",
    "numerical_rank",
    "StageRank",
    "RankReport",
    "stage_ranks",
    "AllocationStep",
    "AllocationTrace",
    "rank_guided_allocate",
    "TableEvaluator",
    "CommandEvaluator",
    "stage_set_key",
]


def singular_values(matrix: np.ndarray) -> np.ndarray:
    """All min(m, n) singular values of a 2-D matrix, descending."""
    a = np.ascontiguousarray(matrix, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ShapeMismatchError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < a.shape[1]:
        a = np.ascontiguousarray(a.T)
    sigma = _kernels.jacobi_singular_values(a)
    return np.sort(np.asarray(sigma, dtype=np.float64))[::-1]


def _as_matrix(weight: np.ndarray) -> np.ndarray:
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim == 4:
        return weight.reshape(weight.shape[0], -1)
    if weight.ndim == 2:
        return weight
    raise ShapeMismatchError(f"expected a 2-D matrix or 4-D conv weight, got shape {weight.shape}")


def numerical_rank(weight: np.ndarray, threshold_ratio: float = 0.5) -> int:
    """Count of singular values strictly above ``threshold_ratio * sigma_max``.

    The boundary value itself is excluded. Raises ZeroMatrixError for an
    all-zero weight (the threshold would be meaningless).
    """
    if not 0.0 < threshold_ratio < 1.0:
        raise ValueError(f"threshold_ratio must be in (0, 1), got {threshold_ratio}")
    matrix = _as_matrix(weight)
    if not np.any(matrix):
        raise ZeroMatrixError("numerical rank of an all-zero matrix is undefined")
    sigma = singular_values(matrix)
    return int(np.sum(sigma > threshold_ratio * sigma[0]))


@dataclass(frozen=True)
class StageRank:
    stage_id: int
    c_out: int
    rank: int
    normalized: float


@dataclass(frozen=True)
class RankReport:
    """Per-stage numerical ranks, ordered by stage id."""

    stages: tuple[StageRank, ...]

    def to_dict(self) -> dict:
        return {
            "stages": [
                {
                    "stage_id": s.stage_id,
                    "c_out": s.c_out,
                    "rank": s.rank,
                    "normalized_rank": s.normalized,
                }
                for s in self.stages
            ]
        }


def stage_ranks(
    tensors: Mapping[str, np.ndarray],
    stage_manifest: Sequence[tuple[int, str, int | None]],
    threshold_ratio: float = 0.5,
) -> RankReport:
    """Numerical rank of the named weight of each stage.

    ``stage_manifest`` rows are (stage_id, weight_name, c_out); pass c_out
    as None to take it from the weight's leading dim. The report is sorted
    by stage id regardless of manifest order.
    """
    out = []
    for stage_id, weight_name, c_out in stage_manifest:
        if weight_name not in tensors:
            raise MissingWeightError(f"stage {stage_id}: weight {weight_name!r} not in archive")
        weight = tensors[weight_name]
        actual_c_out = int(np.asarray(weight).shape[0])
        if c_out is None:
            c_out = actual_c_out
        elif c_out != actual_c_out:
            raise ConfigError(
                f"stage {stage_id}: declared c_out {c_out} != weight leading dim {actual_c_out}"
            )
        rank = numerical_rank(weight, threshold_ratio)
        out.append(StageRank(stage_id, c_out, rank, rank / c_out))
    out.sort(key=lambda s: s.stage_id)
    ids = [s.stage_id for s in out]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate stage ids in manifest: {ids}")
    return RankReport(tuple(out))


@dataclass(frozen=True)
class AllocationStep:
    stage_id: int
    score: float
    accepted: bool


@dataclass(frozen=True)
class AllocationTrace:
    """Replay record of the rank-guided replacement loop."""

    visit_order: tuple[int, ...]
    steps: tuple[AllocationStep, ...]
    final_stages: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "visit_order": list(self.visit_order),
            "steps": [
                {"stage_id": s.stage_id, "score": s.score, "accepted": s.accepted}
                for s in self.steps
            ],
            "final_stages": list(self.final_stages),
        }


def rank_guided_allocate(
    ranks: RankReport,
    evaluator: Callable[[tuple[int, ...]], float],
    baseline_score: float,
) -> AllocationTrace:
    """Cumulatively replace stages in ascending-rank order while the score holds.

    Stages are visited by ascending normalized rank (ties by lower stage
    id). At each step the candidate stage joins the replacement set and the
    evaluator scores the whole set; a score >= ``baseline_score`` accepts
    the replacement, anything lower stops the walk and the last accepted
    set is returned. The evaluator is called at most once per stage.
    """
    if not ranks.stages:
        raise ValueError("rank report is empty")
    order = tuple(
        s.stage_id for s in sorted(ranks.stages, key=lambda s: (s.normalized, s.stage_id))
    )
    accepted: list[int] = []
    steps: list[AllocationStep] = []
    for stage_id in order:
        trial = tuple(accepted + [stage_id])
        score = float(evaluator(trial))
        ok = score >= baseline_score
        steps.append(AllocationStep(stage_id, score, ok))
        if not ok:
            break
        accepted.append(stage_id)
    return AllocationTrace(order, tuple(steps), tuple(accepted))


def stage_set_key(stages: Sequence[int]) -> str:
    """Canonical key for a replacement set: stage ids joined in visit order."""
    return ",".join(str(s) for s in stages)


class TableEvaluator:
    """Evaluator backed by a {stage-set-key: score} table."""

    def __init__(self, table: Mapping[str, float]):
        self.table = dict(table)
        self.calls = 0

    def __call__(self, stages: tuple[int, ...]) -> float:
        self.calls += 1
        key = stage_set_key(stages)
        if key not in self.table:
            raise ConfigError(f"evaluator table has no entry for stage set {key!r}")
        return float(self.table[key])


class CommandEvaluator:
    """Evaluator that shells out to a user command.

    The template's ``{stages}`` placeholder is replaced by the comma-joined
    stage ids; the command must print a single float on stdout.
    """

    def __init__(self, template: str):
        if "{stages}" not in template:
            raise ConfigError("evaluator command template must contain '{stages}'")
        self.template = template
        self.calls = 0

    def __call__(self, stages: tuple[int, ...]) -> float:
        self.calls += 1
        cmd = shlex.split(self.template.replace("{stages}", stage_set_key(stages)))
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, check=True)
        except (OSError, subprocess.CalledProcessError) as exc:
            raise ConfigError(f"evaluator command failed for {stages}: {exc}") from exc
        try:
            return float(proc.stdout.strip())
        except ValueError as exc:
            raise ConfigError(
                f"evaluator command printed non-numeric output: {proc.stdout!r}"
            ) from exc
