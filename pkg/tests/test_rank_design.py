import sys

import numpy as np
import pytest

from detlab import (
    CommandEvaluator,
    ConfigError,
    MissingWeightError,
    RankReport,
    StageRank,
    TableEvaluator,
    ZeroMatrixError,
    numerical_rank,
    rank_guided_allocate,
    singular_values,
    stage_ranks,
)


def planted_matrix(rng, m, n, sigmas):
    """U diag(sigmas) V^T with random orthogonal factors."""
    q1, _ = np.linalg.qr(rng.standard_normal((m, m)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    diag = np.zeros((m, n))
    for i, s in enumerate(sigmas):
        diag[i, i] = s
    return q1 @ diag @ q2.T


class TestSingularValues:
    def test_matches_lapack_on_random_matrices(self, rng):
        for _ in range(30):
            m = int(rng.integers(2, 40))
            n = int(rng.integers(2, 40))
            a = rng.standard_normal((m, n))
            ours = singular_values(a)
            ref = np.linalg.svd(a, compute_uv=False)
            np.testing.assert_allclose(ours, ref, atol=1e-10 * ref[0])

    def test_diagonal_matrix(self):
        sig = singular_values(np.diag([10.0, 6.0, 4.0, 1.0]))
        np.testing.assert_allclose(sig, [10.0, 6.0, 4.0, 1.0], atol=1e-12)

    def test_wide_matrix_handled_by_transpose(self, rng):
        a = rng.standard_normal((3, 9))
        np.testing.assert_allclose(
            singular_values(a), np.linalg.svd(a, compute_uv=False), atol=1e-10
        )


class TestNumericalRank:
    def test_identity(self):
        assert numerical_rank(np.eye(4)) == 4

    def test_rank_one_outer_product(self, rng):
        u = rng.standard_normal(6)
        v = rng.standard_normal(8)
        assert numerical_rank(np.outer(u, v)) == 1

    def test_diagonal_thresholding(self):
        # sigma_max 10, threshold 5: {10, 6} pass, {4, 1} do not
        assert numerical_rank(np.diag([10.0, 6.0, 4.0, 1.0])) == 2

    def test_threshold_boundary_excluded(self):
        # sigma exactly at sigma_max/2 must not count (strict >)
        assert numerical_rank(np.diag([2.0, 1.0])) == 1

    def test_conv_weight_reshaped_to_matrix(self, rng):
        w = rng.standard_normal((8, 4, 3, 3))
        assert numerical_rank(w) == numerical_rank(w.reshape(8, 36))

    def test_zero_matrix_rejected(self):
        with pytest.raises(ZeroMatrixError):
            numerical_rank(np.zeros((4, 4)))

    def test_threshold_ratio_validated(self):
        with pytest.raises(ValueError):
            numerical_rank(np.eye(2), threshold_ratio=1.0)

    def test_scale_invariance(self, rng):
        for _ in range(20):
            a = planted_matrix(rng, 12, 9, rng.uniform(0.1, 3.0, 6))
            base = numerical_rank(a)
            for c in (1e-3, -2.5, 1e4):
                assert numerical_rank(c * a) == base

    def test_orthogonal_invariance(self, rng):
        for _ in range(20):
            m = int(rng.integers(4, 24))
            n = int(rng.integers(4, 24))
            a = rng.standard_normal((m, n))
            q, _ = np.linalg.qr(rng.standard_normal((m, m)))
            assert numerical_rank(q @ a) == numerical_rank(a)
            s1 = singular_values(a)
            s2 = singular_values(q @ a)
            np.testing.assert_allclose(s1 / s1[0], s2 / s2[0], atol=1e-10)

    def test_planted_spectrum_reproduced(self, rng):
        sigmas = [1.0, 0.9, 0.8, 0.3, 0.2]
        a = planted_matrix(rng, 10, 7, sigmas)
        assert numerical_rank(a) == 3


class TestStageRanks:
    def test_reports_normalized_ranks_sorted_by_stage(self, rng):
        tensors = {
            "late": planted_matrix(rng, 8, 20, [1.0] * 2 + [0.1] * 6),
            "early": np.eye(8),
        }
        report = stage_ranks(tensors, [(5, "late", 8), (2, "early", None)])
        assert [s.stage_id for s in report.stages] == [2, 5]
        assert report.stages[0].rank == 8
        assert report.stages[0].normalized == 1.0
        assert report.stages[1].rank == 2
        assert report.stages[1].normalized == pytest.approx(0.25)

    def test_rank_one_stage_normalizes_to_one_over_c_out(self, rng):
        tensors = {"collapsed": np.outer(rng.standard_normal(8), rng.standard_normal(12))}
        report = stage_ranks(tensors, [(1, "collapsed", 8)])
        assert report.stages[0].rank == 1
        assert report.stages[0].normalized == pytest.approx(1 / 8)

    def test_missing_weight(self):
        with pytest.raises(MissingWeightError):
            stage_ranks({}, [(1, "absent", 4)])

    def test_c_out_mismatch_rejected(self, rng):
        with pytest.raises(ConfigError):
            stage_ranks({"w": np.eye(4)}, [(1, "w", 8)])


def report_from_normalized(pairs):
    """RankReport from (stage_id, normalized_rank) with c_out 16."""
    return RankReport(
        tuple(StageRank(sid, 16, int(norm * 16), norm) for sid, norm in pairs)
    )


class TestRankGuidedAllocate:
    def test_constant_evaluator_replaces_everything(self):
        ranks = report_from_normalized([(1, 0.5), (2, 0.25), (3, 0.75)])
        trace = rank_guided_allocate(ranks, lambda s: 44.4, baseline_score=44.4)
        assert trace.visit_order == (2, 1, 3)
        assert trace.final_stages == (2, 1, 3)
        assert all(step.accepted for step in trace.steps)

    def test_single_stage_rejection_gives_empty_set(self):
        ranks = report_from_normalized([(1, 0.5)])
        trace = rank_guided_allocate(ranks, lambda s: 40.0, baseline_score=44.4)
        assert trace.final_stages == ()
        assert trace.steps[0].accepted is False

    def test_published_replay(self):
        # visit order 8-4-7-..., scores 44.5/44.5/44.3 against baseline
        # 44.4: stages 8 and 4 accepted, stage 7 rejected, walk stops
        ranks = report_from_normalized(
            [(8, 0.10), (4, 0.20), (7, 0.30), (3, 0.40), (5, 0.50), (1, 0.60), (6, 0.70), (2, 0.80)]
        )
        evaluator = TableEvaluator({"8": 44.5, "8,4": 44.5, "8,4,7": 44.3})
        trace = rank_guided_allocate(ranks, evaluator, baseline_score=44.4)
        assert trace.visit_order == (8, 4, 7, 3, 5, 1, 6, 2)
        assert trace.final_stages == (8, 4)
        assert evaluator.calls == 3
        assert [s.accepted for s in trace.steps] == [True, True, False]

    def test_ties_break_by_lower_stage_id(self):
        ranks = report_from_normalized([(9, 0.5), (3, 0.5), (6, 0.5)])
        trace = rank_guided_allocate(ranks, lambda s: 1.0, baseline_score=0.0)
        assert trace.visit_order == (3, 6, 9)

    def test_never_more_calls_than_stages_and_prefix_property(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 9))
            ranks = report_from_normalized(
                [(i + 1, float(r)) for i, r in enumerate(rng.uniform(0.05, 1.0, n))]
            )
            scores = {i: float(rng.uniform(40, 50)) for i in range(1, n + 1)}
            calls = []

            def evaluator(stages):
                calls.append(stages)
                return scores[len(stages)]

            trace = rank_guided_allocate(ranks, evaluator, baseline_score=45.0)
            assert len(calls) <= n
            assert trace.final_stages == trace.visit_order[: len(trace.final_stages)]

    def test_monotone_evaluator_yields_maximal_prefix(self, rng):
        # non-increasing score in set size: result must equal brute-force
        # search over prefixes of the visit order
        for _ in range(30):
            n = int(rng.integers(1, 9))
            ranks = report_from_normalized(
                [(i + 1, float(r)) for i, r in enumerate(rng.uniform(0.05, 1.0, n))]
            )
            drops = np.sort(rng.uniform(40, 50, n))[::-1]
            baseline = float(rng.uniform(40, 50))
            evaluator = lambda stages: float(drops[len(stages) - 1])
            trace = rank_guided_allocate(ranks, evaluator, baseline)
            best = 0
            for size in range(1, n + 1):
                if all(drops[s - 1] >= baseline for s in range(1, size + 1)):
                    best = size
                else:
                    break
            assert len(trace.final_stages) == best

    def test_empty_report_rejected(self):
        with pytest.raises(ValueError):
            rank_guided_allocate(RankReport(()), lambda s: 1.0, 0.0)


class TestEvaluators:
    def test_table_missing_key(self):
        with pytest.raises(ConfigError):
            TableEvaluator({})((1,))

    def test_command_evaluator_runs_and_parses(self):
        evaluator = CommandEvaluator(
            f'{sys.executable} -c "import sys; print(40 + len(\'{{stages}}\'.split(\',\')))"'
        )
        assert evaluator((8,)) == 41.0
        assert evaluator((8, 4)) == 42.0
        assert evaluator.calls == 2

    def test_command_template_requires_placeholder(self):
        with pytest.raises(ConfigError):
            CommandEvaluator("echo 42")

    def test_command_failure_wrapped(self):
        evaluator = CommandEvaluator(f"{sys.executable} -c \"import sys; sys.exit(1), '{{stages}}'\"")
        with pytest.raises(ConfigError):
            evaluator((1,))
