"""Interaction data: rating-file ingestion, the dual-adjacency store,
validation holdout and per-epoch negative sampling.

File formats
------------
``*.train.rating`` / ``*.test.rating``: UTF-8 text, one interaction per
line, tab-separated ``userID  itemID  rating  timestamp``. IDs are dense
0-based integers; the rating column is only evidence that the interaction
happened (implicit feedback), the timestamp column only defines recency.

``*.test.negative``: one line per test instance, ``(userID,itemID)``
followed by tab-separated negative item IDs (99 in the published splits;
the loader accepts any count so tiny fixtures work).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .tensor import SeededRng

log = logging.getLogger(__name__)


@dataclass
class TestInstance:
    """One held-out positive plus its fixed negative candidates."""

    user: int
    positive_item: int
    negative_items: np.ndarray


@dataclass
class TrainBatch:
    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.users.shape[0]


class InteractionStore:
    """Binary interaction matrix held as dual adjacency.

    ``user_items[u]`` is the strictly increasing array of items user ``u``
    interacted with; ``item_users[i]`` the strictly increasing array of
    users who interacted with item ``i``. The store is immutable after
    construction and safe to share across threads.
    """

    def __init__(self, num_users: int, num_items: int,
                 user_items: list[np.ndarray], item_users: list[np.ndarray],
                 latest_item: np.ndarray | None = None,
                 duplicates_collapsed: int = 0):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.user_items = user_items
        self.item_users = item_users
        self.latest_item = latest_item
        self.duplicates_collapsed = duplicates_collapsed
        self._user_csr: sp.csr_matrix | None = None
        self._item_csr: sp.csr_matrix | None = None
        self._pos_users: np.ndarray | None = None
        self._pos_items: np.ndarray | None = None

    # -- construction -------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs, num_users: int | None = None,
                   num_items: int | None = None, recency=None) -> "InteractionStore":
        """Build a store from (user, item) pairs.

        Duplicates collapse to one interaction. ``recency`` is an optional
        parallel sequence of sortable keys; by default the pair order is
        the recency order (later pairs are more recent).
        """
        best: dict[tuple[int, int], object] = {}
        dupes = 0
        if recency is None:
            recency = range(len(pairs)) if hasattr(pairs, "__len__") else None
        if recency is None:
            pairs = list(pairs)
            recency = range(len(pairs))
        for (u, i), key in zip(pairs, recency):
            k = (int(u), int(i))
            if k in best:
                dupes += 1
                if key > best[k]:
                    best[k] = key
            else:
                best[k] = key

        if best:
            users = np.fromiter((u for u, _ in best), dtype=np.int64, count=len(best))
            items = np.fromiter((i for _, i in best), dtype=np.int64, count=len(best))
        else:
            users = np.empty(0, dtype=np.int64)
            items = np.empty(0, dtype=np.int64)
        if users.size and (users.min() < 0 or items.min() < 0):
            raise DataError("negative user/item index in interaction pairs")
        m = int(users.max()) + 1 if users.size else 0
        n = int(items.max()) + 1 if items.size else 0
        num_users = m if num_users is None else max(int(num_users), m)
        num_items = n if num_items is None else max(int(num_items), n)

        user_items = _group(users, items, num_users)
        item_users = _group(items, users, num_items)

        latest = np.full(num_users, -1, dtype=np.int64)
        latest_key: list = [None] * num_users
        for (u, i), key in best.items():
            if latest_key[u] is None or key > latest_key[u]:
                latest_key[u] = key
                latest[u] = i

        return cls(num_users, num_items, user_items, item_users,
                   latest_item=latest, duplicates_collapsed=dupes)

    # -- queries ------------------------------------------------------

    @property
    def num_interactions(self) -> int:
        return int(sum(a.size for a in self.user_items))

    def has(self, u: int, i: int) -> bool:
        arr = self.user_items[u]
        pos = np.searchsorted(arr, i)
        return pos < arr.size and arr[pos] == i

    def popularity(self) -> np.ndarray:
        """Interaction count per item (the ItemPop score)."""
        return np.array([a.size for a in self.item_users], dtype=np.int64)

    def user_matrix(self) -> sp.csr_matrix:
        """Binary user x item adjacency as CSR (cached)."""
        if self._user_csr is None:
            self._user_csr = _adjacency_csr(self.user_items, self.num_items)
        return self._user_csr

    def item_matrix(self) -> sp.csr_matrix:
        """Binary item x user adjacency as CSR (cached)."""
        if self._item_csr is None:
            self._item_csr = _adjacency_csr(self.item_users, self.num_users)
        return self._item_csr

    def positives(self) -> tuple[np.ndarray, np.ndarray]:
        """All observed (user, item) pairs as two aligned arrays."""
        if self._pos_users is None:
            counts = np.array([a.size for a in self.user_items], dtype=np.int64)
            self._pos_users = np.repeat(np.arange(self.num_users, dtype=np.int64), counts)
            self._pos_items = (np.concatenate(self.user_items)
                               if self.num_interactions else np.empty(0, dtype=np.int64))
        return self._pos_users, self._pos_items

    def validate(self) -> None:
        """Check dual-adjacency consistency; raises DataError on violation."""
        for name, lists, bound in (("user_items", self.user_items, self.num_items),
                                   ("item_users", self.item_users, self.num_users)):
            for idx, arr in enumerate(lists):
                if arr.size and (arr[0] < 0 or arr[-1] >= bound):
                    raise DataError(f"{name}[{idx}] has out-of-range index")
                if arr.size > 1 and not (np.diff(arr) > 0).all():
                    raise DataError(f"{name}[{idx}] is not strictly increasing")
        total_u = sum(a.size for a in self.user_items)
        total_i = sum(a.size for a in self.item_users)
        if total_u != total_i:
            raise DataError(f"interaction count mismatch: {total_u} vs {total_i}")
        rebuilt = _group(*_flatten(self.item_users), self.num_users)[: self.num_users]
        for u in range(self.num_users):
            if not np.array_equal(rebuilt[u], self.user_items[u]):
                raise DataError(f"dual adjacency inconsistent at user {u}")


def _flatten(lists: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    counts = np.array([a.size for a in lists], dtype=np.int64)
    owners = np.repeat(np.arange(len(lists), dtype=np.int64), counts)
    members = np.concatenate(lists) if counts.sum() else np.empty(0, dtype=np.int64)
    return members, owners


def _group(keys: np.ndarray, values: np.ndarray, num_keys: int) -> list[np.ndarray]:
    """Group sorted values per key index; each group strictly increasing."""
    order = np.lexsort((values, keys))
    k, v = keys[order], values[order]
    starts = np.searchsorted(k, np.arange(num_keys))
    ends = np.searchsorted(k, np.arange(num_keys), side="right")
    return [v[s:e] for s, e in zip(starts, ends)]


def _adjacency_csr(lists: list[np.ndarray], num_cols: int) -> sp.csr_matrix:
    counts = np.array([a.size for a in lists], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate(lists) if counts.sum() else np.empty(0, dtype=np.int64)
    data = np.ones(indices.size, dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(lists), num_cols))


# -- file loading -----------------------------------------------------


def _parse_rating_file(path) -> tuple[list[tuple[int, int]], list[tuple]]:
    pairs: list[tuple[int, int]] = []
    keys: list[tuple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected tab-separated "
                                f"userID<TAB>itemID, got {line!r}")
            try:
                u, i = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer id: {exc}") from None
            if u < 0 or i < 0:
                raise DataError(f"{path}:{lineno}: negative index")
            ts = 0
            if len(parts) >= 4 and parts[3].strip():
                try:
                    ts = int(float(parts[3]))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad timestamp "
                                    f"{parts[3]!r}") from None
            pairs.append((u, i))
            keys.append((ts, lineno))
    return pairs, keys


def _parse_negative_file(path) -> dict[int, tuple[int, np.ndarray]]:
    out: dict[int, tuple[int, np.ndarray]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            head = parts[0].strip()
            if not (head.startswith("(") and head.endswith(")")):
                raise DataError(f"{path}:{lineno}: expected (user,item) header, "
                                f"got {head!r}")
            try:
                u_str, i_str = head[1:-1].split(",")
                u, pos = int(u_str), int(i_str)
                negs = np.array([int(x) for x in parts[1:] if x.strip()],
                                dtype=np.int64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if u in out:
                raise DataError(f"{path}:{lineno}: duplicate negatives for user {u}")
            out[u] = (pos, negs)
    return out


def load_dataset(train_path, test_path, negatives_path
                 ) -> tuple[InteractionStore, list[TestInstance]]:
    """Load the train/test/negatives triple into a store plus test instances.

    The store holds every training pair exactly once (duplicate lines are
    collapsed with a logged warning count); there is one test instance per
    test-file user, cross-checked against the negatives file.
    """
    train_pairs, train_keys = _parse_rating_file(train_path)
    if not train_pairs:
        raise DataError(f"{train_path}: no interactions")
    test_pairs, _ = _parse_rating_file(test_path)
    negatives = _parse_negative_file(negatives_path)

    max_train_user = max(u for u, _ in train_pairs)
    max_item = max(i for _, i in train_pairs)
    seen_users = set()
    for u, i in test_pairs:
        if u > max_train_user:
            raise DataError(f"{test_path}: test user {u} outside training user "
                            f"range 0..{max_train_user}")
        if u in seen_users:
            raise DataError(f"{test_path}: more than one test positive for user {u}")
        seen_users.add(u)
        max_item = max(max_item, i)
    for u, (pos, negs) in negatives.items():
        if negs.size:
            max_item = max(max_item, int(negs.max()))
            if negs.min() < 0:
                raise DataError(f"{negatives_path}: negative item index for user {u}")

    store = InteractionStore.from_pairs(train_pairs,
                                        num_users=max_train_user + 1,
                                        num_items=max_item + 1,
                                        recency=train_keys)
    if store.duplicates_collapsed:
        log.warning("%s: collapsed %d duplicate training pairs",
                    train_path, store.duplicates_collapsed)
    empty = [u for u in range(store.num_users) if store.user_items[u].size == 0]
    if empty:
        raise DataError(f"{train_path}: user indices are not dense; users "
                        f"{empty[:5]} have no interactions")

    instances: list[TestInstance] = []
    for u, pos in test_pairs:
        if u not in negatives:
            raise DataError(f"{negatives_path}: no negatives for test user {u}")
        neg_pos, negs = negatives[u]
        if neg_pos != pos:
            raise DataError(f"{negatives_path}: test positive mismatch for user "
                            f"{u}: {neg_pos} vs {pos}")
        if np.any(negs == pos):
            raise DataError(f"{negatives_path}: positive item {pos} listed as "
                            f"negative for user {u}")
        arr = store.user_items[u]
        if negs.size and arr.size:
            pos_in_arr = np.searchsorted(arr, negs)
            observed = ((pos_in_arr < arr.size)
                        & (arr[np.minimum(pos_in_arr, arr.size - 1)] == negs))
            if observed.any():
                bad = negs[observed][0]
                raise DataError(f"{negatives_path}: negative {bad} for user {u} "
                                f"appears in their training interactions")
        instances.append(TestInstance(u, pos, negs))

    extra = set(negatives) - seen_users
    if extra:
        log.warning("%s: %d negative lines without matching test positives "
                    "ignored", negatives_path, len(extra))
    return store, instances


# -- validation holdout ----------------------------------------------


def holdout_validation(store: InteractionStore
                       ) -> tuple[InteractionStore, list[tuple[int, int]]]:
    """Remove each user's most recent interaction for validation.

    Users with a single interaction keep it (removing it would orphan
    their embedding) and contribute no validation pair.
    """
    if store.latest_item is None:
        raise DataError("store carries no recency information; cannot hold out")
    val_pairs: list[tuple[int, int]] = []
    new_user_items: list[np.ndarray] = []
    for u in range(store.num_users):
        arr = store.user_items[u]
        if arr.size == 0:
            raise DataError(f"user {u} has no training interactions")
        if arr.size >= 2:
            li = int(store.latest_item[u])
            val_pairs.append((u, li))
            new_user_items.append(arr[arr != li])
        else:
            new_user_items.append(arr)
    members, owners = _flatten(new_user_items)
    item_users = _group(members, owners, store.num_items)
    reduced = InteractionStore(store.num_users, store.num_items,
                               new_user_items, item_users, latest_item=None)
    return reduced, val_pairs


# -- negative sampling ------------------------------------------------


def sample_epoch(store: InteractionStore, neg_ratio: int, rng_seed: int,
                 batch_size: int = 256):
    """Yield one epoch of globally shuffled training batches.

    Every observed (u, i) appears once with label 1, plus ``neg_ratio``
    uniformly sampled unobserved items per positive with label 0 (distinct
    within one positive's negative set, resampled fresh every call). The
    same seed reproduces the identical batch stream.
    """
    if neg_ratio < 1:
        raise ValueError(f"neg_ratio must be >= 1, got {neg_ratio}")
    rng = SeededRng(rng_seed)
    n = store.num_items
    pos_users, pos_items = store.positives()

    neg_blocks: list[np.ndarray] = []
    replacement_users = 0
    for u in range(store.num_users):
        arr = store.user_items[u]
        c = arr.size
        if c == 0:
            continue
        avail = n - c
        if avail <= 0:
            raise DataError(f"user {u} interacted with every item; cannot "
                            f"sample negatives")
        if avail < neg_ratio:
            pool = np.setdiff1d(np.arange(n, dtype=np.int64), arr)
            idx = rng.integers(0, pool.size, size=(c, neg_ratio))
            neg_blocks.append(pool[idx])
            replacement_users += 1
            continue
        draw = rng.integers(0, n, size=(c, neg_ratio)).astype(np.int64)
        while True:
            pos = np.searchsorted(arr, draw)
            observed = (pos < c) & (arr[np.minimum(pos, c - 1)] == draw)
            order = np.argsort(draw, axis=1, kind="stable")
            sorted_vals = np.take_along_axis(draw, order, axis=1)
            dup_sorted = np.zeros_like(sorted_vals, dtype=bool)
            dup_sorted[:, 1:] = sorted_vals[:, 1:] == sorted_vals[:, :-1]
            dup = np.zeros_like(dup_sorted)
            np.put_along_axis(dup, order, dup_sorted, axis=1)
            bad = observed | dup
            n_bad = int(bad.sum())
            if n_bad == 0:
                break
            draw[bad] = rng.integers(0, n, size=n_bad)
        neg_blocks.append(draw)

    if replacement_users:
        log.warning("sampled negatives with replacement for %d users whose "
                    "unobserved set is smaller than neg_ratio=%d",
                    replacement_users, neg_ratio)

    neg_items = (np.concatenate([b.ravel() for b in neg_blocks])
                 if neg_blocks else np.empty(0, dtype=np.int64))
    users = np.concatenate([pos_users, np.repeat(pos_users, neg_ratio)])
    items = np.concatenate([pos_items, neg_items])
    labels = np.concatenate([np.ones(pos_users.size), np.zeros(neg_items.size)])

    perm = rng.permutation(users.size)
    users, items, labels = users[perm], items[perm], labels[perm]
    for start in range(0, users.size, batch_size):
        end = start + batch_size
        yield TrainBatch(users[start:end], items[start:end], labels[start:end])


def sample_candidate_negatives(store: InteractionStore,
                               pairs: list[tuple[int, int]],
                               num_negatives: int,
                               rng: SeededRng) -> list[TestInstance]:
    """Build ranking instances for held-out pairs by sampling unobserved items.

    Used for the validation split: each pair gets ``num_negatives`` distinct
    items outside the user's interactions (fewer when the catalog is too
    small). Deterministic given the rng stream.
    """
    n = store.num_items
    instances = []
    for u, pos in pairs:
        arr = store.user_items[u]
        excluded = arr if store.has(u, pos) else np.union1d(arr, [pos])
        avail = n - excluded.size
        want = min(num_negatives, avail)
        if want <= 0:
            instances.append(TestInstance(u, pos, np.empty(0, dtype=np.int64)))
            continue
        chosen: set[int] = set()
        while len(chosen) < want:
            batch = rng.integers(0, n, size=2 * (want - len(chosen)) + 8)
            for j in batch:
                j = int(j)
                if j in chosen or j == pos:
                    continue
                k = np.searchsorted(excluded, j)
                if k < excluded.size and excluded[k] == j:
                    continue
                chosen.add(j)
                if len(chosen) == want:
                    break
        instances.append(TestInstance(u, pos, np.array(sorted(chosen),
                                                       dtype=np.int64)))
    return instances
