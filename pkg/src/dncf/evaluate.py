"""Leave-one-out ranking evaluation.

Each test instance ranks its held-out positive against the instance's
fixed negative candidates; HR@k counts a hit when the positive lands in
the top k, NDCG@k discounts the hit by 1/log2(rank + 1). Reports average
both metrics over users for k = 1..k_max.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .data import TestInstance
from .errors import ProtocolError

DEFAULT_K_MAX = 10


def hr_at_k(rank: int, k: int) -> int:
    """1 if the positive's 1-based rank is within the top k."""
    return 1 if rank <= k else 0


def ndcg_at_k(rank: int, k: int) -> float:
    """1/log2(rank + 1) inside the truncation, 0 outside."""
    return 1.0 / np.log2(rank + 1.0) if rank <= k else 0.0


@dataclass
class RankedList:
    """Candidates sorted by descending score, ties broken by ascending id."""

    items: np.ndarray
    position_of_positive: int


def _ranked_list(candidates: np.ndarray, scores: np.ndarray,
                 positive: int) -> RankedList:
    order = np.lexsort((candidates, -scores))
    items = candidates[order]
    position = int(np.nonzero(items == positive)[0][0]) + 1
    return RankedList(items, position)


def rank_candidates(scorer, instance: TestInstance) -> RankedList:
    """Score the positive plus its negatives and locate the positive."""
    candidates = np.concatenate([[instance.positive_item],
                                 instance.negative_items]).astype(np.int64)
    users = np.full(candidates.size, instance.user, dtype=np.int64)
    scores = np.asarray(scorer.score_pairs(users, candidates), dtype=np.float64)
    return _ranked_list(candidates, scores, instance.positive_item)


@dataclass
class EvalReport:
    """Averaged HR@k / NDCG@k for k = 1..k_max plus bookkeeping."""

    hr: np.ndarray
    ndcg: np.ndarray
    users_evaluated: int
    epoch: int = 0
    wall_time: float = 0.0

    def __post_init__(self):
        self.hr = np.asarray(self.hr, dtype=np.float64)
        self.ndcg = np.asarray(self.ndcg, dtype=np.float64)
        for name, arr in (("hr", self.hr), ("ndcg", self.ndcg)):
            if arr.size and (np.any(arr < 0) or np.any(arr > 1)):
                raise ProtocolError(f"{name} values outside [0, 1]")
            if np.any(np.diff(arr) < -1e-15):
                raise ProtocolError(f"{name} not nondecreasing in k")
        if np.any(self.ndcg > self.hr + 1e-15):
            raise ProtocolError("ndcg@k exceeds hr@k")

    def hr_at(self, k: int) -> float:
        return float(self.hr[k - 1])

    def ndcg_at(self, k: int) -> float:
        return float(self.ndcg[k - 1])

    def to_json_line(self, zero_seconds: bool = False) -> str:
        return json.dumps({
            "epoch": int(self.epoch),
            "hr": [float(x) for x in self.hr],
            "ndcg": [float(x) for x in self.ndcg],
            "users": int(self.users_evaluated),
            "seconds": 0.0 if zero_seconds else float(self.wall_time),
        })


def evaluate(scorer, instances: list[TestInstance], k_max: int = DEFAULT_K_MAX,
             epoch: int = 0, chunk_pairs: int = 65536) -> EvalReport:
    """Rank every instance's candidates and average the metrics.

    Scoring is batched across instances; per-user metrics merge by
    commutative summation, so the report does not depend on instance
    order.
    """
    if not instances:
        raise ProtocolError("no test instances to evaluate")
    t0 = time.perf_counter()
    ranks = np.empty(len(instances), dtype=np.int64)

    start = 0
    while start < len(instances):
        stop = start
        total = 0
        while stop < len(instances):
            size = instances[stop].negative_items.size + 1
            if total and total + size > chunk_pairs:
                break
            total += size
            stop += 1
        users = np.empty(total, dtype=np.int64)
        items = np.empty(total, dtype=np.int64)
        bounds = []
        off = 0
        for inst in instances[start:stop]:
            size = inst.negative_items.size + 1
            users[off:off + size] = inst.user
            items[off] = inst.positive_item
            items[off + 1:off + size] = inst.negative_items
            bounds.append((off, off + size))
            off += size
        scores = np.asarray(scorer.score_pairs(users, items), dtype=np.float64)
        for j, (lo, hi) in enumerate(bounds):
            ranked = _ranked_list(items[lo:hi], scores[lo:hi], items[lo])
            ranks[start + j] = ranked.position_of_positive
        start = stop

    # order-independent aggregation: hits are exact integer sums and the
    # gain sums use correctly-rounded summation, so permuting the instance
    # list yields the bitwise-identical report
    ks = np.arange(1, k_max + 1)
    hit = ranks[:, None] <= ks[None, :]
    hr = hit.sum(axis=0).astype(np.float64) / len(instances)
    gains = np.where(hit, 1.0 / np.log2(ranks + 1.0)[:, None], 0.0)
    ndcg = np.array([math.fsum(gains[:, j]) for j in range(k_max)])
    ndcg /= len(instances)
    return EvalReport(hr=hr, ndcg=ndcg, users_evaluated=len(instances),
                      epoch=epoch, wall_time=time.perf_counter() - t0)
