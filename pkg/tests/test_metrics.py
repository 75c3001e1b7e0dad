"""Ranking metrics with hand-computed and exhaustive-pair oracles."""

import numpy as np
import pytest

from alignrec.errors import ContractError, ValidationError
from alignrec.metrics import (
    auc_score,
    early_stop_check,
    eval_alignment,
    eval_recommendation,
)


def auc_pair_oracle(scores, labels):
    """Exhaustive concordant/discordant pair count."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    if not pos or not neg:
        return None
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestEvalAlignment:
    def test_perfect_embeddings(self):
        emb = np.eye(4)
        report = eval_alignment(emb, emb.copy(), [(i, i) for i in range(4)], ks=[1, 10])
        assert report.metrics["hits@1"] == 1.0
        assert report.metrics["mrr"] == 1.0

    def test_all_identical_ties_break_by_id(self):
        emb = np.ones((3, 2))
        report = eval_alignment(emb, emb.copy(), [(0, 0), (1, 1), (2, 2)], ks=[1])
        # Ranks by id: entity 0 ranks 1, entity 1 ranks 2, entity 2 ranks 3.
        assert report.metrics["hits@1"] == pytest.approx(1 / 3)
        assert report.metrics["mrr"] == pytest.approx((1 + 1 / 2 + 1 / 3) / 3)

    def test_three_candidate_hand_ranking(self):
        emb_a = np.array([[1.0, 0.0]])
        emb_b = np.array([[0.9, 0.1], [1.0, 0.0], [0.0, 1.0]])
        # sims to candidates: 0.9939.., 1.0, 0.0 -> true b=0 ranks second.
        report = eval_alignment(emb_a, emb_b, [(0, 0)], ks=[1, 2])
        assert report.metrics["hits@1"] == 0.0
        assert report.metrics["hits@2"] == 1.0
        assert report.metrics["mrr"] == pytest.approx(0.5)

    def test_missing_embedding_names_entity(self):
        emb = np.eye(2)
        with pytest.raises(ContractError, match="5"):
            eval_alignment(emb, emb, [(0, 5)])

    def test_hits_monotone_in_k(self):
        rng = np.random.default_rng(0)
        emb_a = rng.normal(size=(10, 4))
        emb_b = rng.normal(size=(10, 4))
        pairs = [(i, i) for i in range(10)]
        report = eval_alignment(emb_a, emb_b, pairs, ks=[1, 3, 5, 10])
        values = [report.metrics[f"hits@{k}"] for k in (1, 3, 5, 10)]
        assert values == sorted(values)
        assert report.metrics["hits@10"] == 1.0  # K = all candidates
        assert 1 / 10 <= report.metrics["mrr"] <= 1.0


class TestEvalRecommendation:
    def test_perfect_separation(self):
        report = eval_recommendation(
            [0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], [0, 0, 0, 0], ks=[2]
        )
        assert report.metrics["auc"] == 1.0
        assert report.metrics["recall@2"] == 1.0
        assert report.metrics["ndcg@2"] == 1.0

    def test_all_ties_give_half(self):
        report = eval_recommendation([0.5] * 6, [1, 0, 1, 0, 1, 0], [0] * 6, ks=[3])
        assert report.metrics["auc"] == 0.5

    def test_mixed_case_matches_pair_oracle(self):
        scores = [0.9, 0.8, 0.1]
        labels = [1, 0, 1]
        report = eval_recommendation(scores, labels, [0, 0, 0], ks=[1])
        assert report.metrics["auc"] == pytest.approx(0.5)
        assert report.metrics["auc"] == pytest.approx(auc_pair_oracle(scores, labels))

    @pytest.mark.parametrize("seed", range(8))
    def test_auc_matches_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        scores = np.round(rng.normal(size=30), 1)  # rounding forces ties
        labels = rng.integers(0, 2, size=30)
        got = auc_score(scores, labels)
        expected = auc_pair_oracle(list(scores), list(labels))
        if expected is None:
            assert got is None
        else:
            assert got == pytest.approx(expected)

    def test_single_class_auc_undefined(self):
        report = eval_recommendation([0.4, 0.6], [1, 1], [0, 0], ks=[1])
        assert report.metrics["auc"] is None
        assert report.metrics["recall@1"] is not None

    def test_auc_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=40)
        labels = rng.integers(0, 2, size=40)
        base = auc_score(scores, labels)
        transformed = auc_score(np.exp(2 * scores) + 5, labels)
        assert base == pytest.approx(transformed)

    def test_macro_averaging_per_user(self):
        # User 0 ranks its positive first (recall@1 = 1); user 1 does not (0).
        scores = [0.9, 0.1, 0.2, 0.8]
        labels = [1, 0, 1, 0]
        users = [0, 0, 1, 1]
        report = eval_recommendation(scores, labels, users, ks=[1])
        assert report.metrics["recall@1"] == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            eval_recommendation([0.1], [1, 0], [0, 0])


class TestEarlyStop:
    def test_strictly_improving_continues(self):
        stop, best = early_stop_check([0.1, 0.2, 0.3, 0.4], patience=2)
        assert not stop and best == 3

    def test_flat_history_stops_at_zero(self):
        stop, best = early_stop_check([0.5, 0.5], patience=1)
        assert stop and best == 0

    def test_documented_trace(self):
        stop, best = early_stop_check([0.5, 0.7, 0.6, 0.6], patience=2)
        assert stop and best == 1

    def test_recovery_resets_counter(self):
        stop, best = early_stop_check([0.5, 0.4, 0.6, 0.5, 0.7], patience=2)
        assert not stop and best == 4

    def test_bad_patience(self):
        with pytest.raises(ValidationError):
            early_stop_check([0.1], patience=0)
