"""Synthetic implicit-feedback datasets in the three-file rating layout.

Users and items are grouped into clusters with strong in-cluster affinity
plus a mild popularity tilt, so that personalized models have real signal
to learn while popularity alone stays beatable. Each user's last
interaction becomes the test positive, exactly like the published
benchmark splits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import SeededRng


@dataclass
class DatasetPaths:
    train: Path
    test: Path
    negatives: Path


def generate_dataset(out_dir, prefix: str = "synth", num_users: int = 300,
                     num_items: int = 400, min_interactions: int = 12,
                     max_interactions: int = 30, clusters: int = 6,
                     affinity: float = 3.0, popularity_scale: float = 0.6,
                     num_negatives: int = 99, seed: int = 7) -> DatasetPaths:
    """Write ``<prefix>.train.rating``, ``.test.rating`` and ``.test.negative``.

    Interaction weights follow exp(affinity * same_cluster + pop_i); each
    user draws a distinct weighted set of items (Gumbel top-k), the last
    drawn item is held out as the test positive and the negatives are
    sampled uniformly from the user's untouched items.
    """
    if num_items <= max_interactions + 1:
        raise ValueError("need more items than max_interactions + 1")
    rng = SeededRng(seed)
    gen = rng.generator
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    user_cluster = gen.integers(0, clusters, size=num_users)
    item_cluster = gen.integers(0, clusters, size=num_items)
    popularity = popularity_scale * gen.normal(0.0, 1.0, size=num_items)

    train_lines: list[str] = []
    test_lines: list[str] = []
    negative_lines: list[str] = []
    all_items = np.arange(num_items, dtype=np.int64)

    for u in range(num_users):
        n_u = int(gen.integers(min_interactions, max_interactions + 1))
        logits = popularity + affinity * (item_cluster == user_cluster[u])
        keys = logits + gen.gumbel(size=num_items)
        chosen = np.argpartition(-keys, n_u + 1)[: n_u + 1]
        chosen = gen.permutation(chosen)
        history, test_item = chosen[:-1], int(chosen[-1])

        for ts, item in enumerate(history):
            train_lines.append(f"{u}\t{int(item)}\t1\t{ts}")
        test_lines.append(f"{u}\t{test_item}\t1\t{n_u}")

        pool = np.setdiff1d(all_items, chosen, assume_unique=False)
        take = min(num_negatives, pool.size)
        negs = gen.choice(pool, size=take, replace=False)
        negative_lines.append(f"({u},{test_item})\t" +
                              "\t".join(str(int(j)) for j in negs))

    paths = DatasetPaths(train=out_dir / f"{prefix}.train.rating",
                         test=out_dir / f"{prefix}.test.rating",
                         negatives=out_dir / f"{prefix}.test.negative")
    paths.train.write_text("\n".join(train_lines) + "\n", encoding="utf-8")
    paths.test.write_text("\n".join(test_lines) + "\n", encoding="utf-8")
    paths.negatives.write_text("\n".join(negative_lines) + "\n", encoding="utf-8")
    return paths
