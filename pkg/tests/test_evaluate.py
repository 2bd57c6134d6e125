import math

import numpy as np
import pytest

from dncf.data import TestInstance as Instance
from dncf.errors import ProtocolError
from dncf.evaluate import (EvalReport, evaluate, hr_at_k, ndcg_at_k,
                           rank_candidates)


class ArrayScorer:
    """Scores pairs from a fixed (num_users x num_items) matrix."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    def score_pairs(self, users, items):
        return self.matrix[np.asarray(users), np.asarray(items)]


def test_hr_formula():
    assert hr_at_k(1, 10) == 1
    assert hr_at_k(11, 10) == 0
    assert hr_at_k(10, 10) == 1
    assert hr_at_k(2, 1) == 0


def test_ndcg_formula():
    assert ndcg_at_k(1, 10) == pytest.approx(1.0, abs=1e-15)
    assert ndcg_at_k(3, 10) == pytest.approx(0.5, abs=1e-15)
    assert ndcg_at_k(11, 10) == 0.0
    assert ndcg_at_k(7, 10) == pytest.approx(1.0 / math.log2(8.0), abs=1e-15)


def test_rank_candidates_top_popularity_first():
    scores = np.zeros((1, 5))
    scores[0] = [9.0, 1.0, 2.0, 3.0, 4.0]
    inst = Instance(0, 0, np.array([1, 2, 3, 4]))
    ranked = rank_candidates(ArrayScorer(scores), inst)
    assert ranked.position_of_positive == 1
    assert ranked.items[0] == 0


def test_rank_candidates_constant_scores_tiebreak_by_id():
    inst = Instance(0, 3, np.array([4, 1, 0, 2]))
    ranked = rank_candidates(ArrayScorer(np.zeros((1, 5))), inst)
    assert list(ranked.items) == [0, 1, 2, 3, 4]
    assert ranked.position_of_positive == 4


def test_rank_is_always_within_candidate_count():
    rng = np.random.default_rng(4)
    scores = rng.normal(size=(1, 100))
    for _ in range(20):
        negs = rng.choice(np.arange(1, 100), size=99, replace=False)
        inst = Instance(0, 0, negs)
        ranked = rank_candidates(ArrayScorer(scores), inst)
        assert 1 <= ranked.position_of_positive <= 100


def test_evaluate_two_users_average():
    # user 0's positive ranks 1st, user 1's positive ranks 11th
    scores = np.zeros((2, 12))
    scores[0, 0] = 10.0
    scores[1] = np.arange(12.0)
    scores[1, 0] = -1.0
    negs = np.arange(1, 12)
    instances = [Instance(0, 0, negs), Instance(1, 0, negs)]
    report = evaluate(ArrayScorer(scores), instances)
    assert report.hr_at(10) == pytest.approx(0.5)
    assert report.ndcg_at(10) == pytest.approx(0.5)
    assert report.users_evaluated == 2


def test_oracle_scorer_hits_everything():
    num_items = 30
    scores = np.zeros((3, num_items))
    positives = [5, 7, 9]
    for u, pos in enumerate(positives):
        scores[u, pos] = 1.0
    rng = np.random.default_rng(0)
    instances = []
    for u, pos in enumerate(positives):
        negs = rng.choice([i for i in range(num_items) if i != pos], size=10,
                          replace=False)
        instances.append(Instance(u, pos, negs))
    report = evaluate(ArrayScorer(scores), instances)
    assert np.all(report.hr == 1.0)
    assert np.all(report.ndcg == 1.0)


def test_metrics_match_brute_force_oracle():
    rng = np.random.default_rng(33)
    num_users, num_items = 100, 150
    scores = rng.normal(size=(num_users, num_items))
    instances = []
    for u in range(num_users):
        pos = int(rng.integers(0, num_items))
        negs = rng.choice([i for i in range(num_items) if i != pos],
                          size=40, replace=False)
        instances.append(Instance(u, pos, negs.astype(np.int64)))
    report = evaluate(ArrayScorer(scores), instances)

    # independent reimplementation: python sort + direct formulas
    hr_sum = np.zeros(10)
    ndcg_sum = np.zeros(10)
    for inst in instances:
        cands = [inst.positive_item] + list(inst.negative_items)
        ordered = sorted(cands, key=lambda i: (-scores[inst.user, i], i))
        rank = ordered.index(inst.positive_item) + 1
        for k in range(1, 11):
            if rank <= k:
                hr_sum[k - 1] += 1.0
                ndcg_sum[k - 1] += 1.0 / math.log2(rank + 1)
    assert np.allclose(report.hr, hr_sum / num_users, atol=1e-12)
    assert np.allclose(report.ndcg, ndcg_sum / num_users, atol=1e-12)


def test_chunked_evaluation_matches_unchunked():
    rng = np.random.default_rng(2)
    scores = rng.normal(size=(40, 60))
    instances = []
    for u in range(40):
        pos = int(rng.integers(0, 60))
        negs = rng.choice([i for i in range(60) if i != pos], size=20,
                          replace=False)
        instances.append(Instance(u, pos, negs.astype(np.int64)))
    big = evaluate(ArrayScorer(scores), instances)
    small = evaluate(ArrayScorer(scores), instances, chunk_pairs=25)
    assert np.array_equal(big.hr, small.hr)
    assert np.array_equal(big.ndcg, small.ndcg)


def test_rank_invariance_under_increasing_transforms():
    rng = np.random.default_rng(9)
    scores = rng.normal(size=(25, 50))
    instances = []
    for u in range(25):
        pos = int(rng.integers(0, 50))
        negs = rng.choice([i for i in range(50) if i != pos], size=30,
                          replace=False)
        instances.append(Instance(u, pos, negs.astype(np.int64)))
    base = evaluate(ArrayScorer(scores), instances)
    for transform in (lambda s: 3.0 * s + 1.0, np.arctan,
                      lambda s: s ** 3):
        mapped = evaluate(ArrayScorer(transform(scores)), instances)
        assert np.array_equal(base.hr, mapped.hr)
        assert np.array_equal(base.ndcg, mapped.ndcg)


def test_instance_order_does_not_matter():
    rng = np.random.default_rng(11)
    scores = rng.normal(size=(20, 40))
    instances = []
    for u in range(20):
        pos = int(rng.integers(0, 40))
        negs = rng.choice([i for i in range(40) if i != pos], size=15,
                          replace=False)
        instances.append(Instance(u, pos, negs.astype(np.int64)))
    a = evaluate(ArrayScorer(scores), instances)
    b = evaluate(ArrayScorer(scores), instances[::-1])
    assert np.array_equal(a.hr, b.hr)
    assert np.array_equal(a.ndcg, b.ndcg)


def test_report_invariants_enforced():
    with pytest.raises(ProtocolError):
        EvalReport(hr=np.array([0.5, 0.4]), ndcg=np.array([0.1, 0.1]),
                   users_evaluated=1)
    with pytest.raises(ProtocolError):
        EvalReport(hr=np.array([0.2, 0.4]), ndcg=np.array([0.3, 0.4]),
                   users_evaluated=1)
    report = EvalReport(hr=np.array([0.2, 0.4]), ndcg=np.array([0.1, 0.2]),
                        users_evaluated=1)
    assert np.all(np.diff(report.hr) >= 0)
    assert np.all(report.hr >= report.ndcg)


def test_empty_instances_rejected():
    with pytest.raises(ProtocolError):
        evaluate(ArrayScorer(np.zeros((1, 1))), [])


def test_json_line_schema():
    import json
    report = EvalReport(hr=np.linspace(0.1, 0.5, 10),
                        ndcg=np.linspace(0.05, 0.25, 10),
                        users_evaluated=7, epoch=3, wall_time=1.25)
    obj = json.loads(report.to_json_line())
    assert set(obj) == {"epoch", "hr", "ndcg", "users", "seconds"}
    assert obj["epoch"] == 3 and obj["users"] == 7
    assert len(obj["hr"]) == 10 and len(obj["ndcg"]) == 10
    assert obj["seconds"] == 1.25
    assert json.loads(report.to_json_line(zero_seconds=True))["seconds"] == 0.0
