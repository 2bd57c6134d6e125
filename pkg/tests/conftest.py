import pytest

from dncf import InteractionStore, generate_dataset, load_dataset

TINY_PAIRS = [(0, 0), (0, 2), (0, 4), (1, 1), (1, 3), (2, 0), (2, 2), (2, 4),
              (3, 0), (3, 1), (4, 3), (4, 4)]


@pytest.fixture()
def tiny_store():
    """5 users x 5 items, every row/column non-empty."""
    return InteractionStore.from_pairs(TINY_PAIRS, num_users=5, num_items=5)


@pytest.fixture(scope="session")
def synth_paths(tmp_path_factory):
    """Small cluster-structured dataset on disk (30 users, 120 items)."""
    out = tmp_path_factory.mktemp("synth")
    return generate_dataset(out, num_users=30, num_items=120,
                            min_interactions=10, max_interactions=20,
                            clusters=5, affinity=3.0, seed=3)


@pytest.fixture(scope="session")
def synth_dataset(synth_paths):
    return load_dataset(synth_paths.train, synth_paths.test,
                        synth_paths.negatives)


@pytest.fixture(scope="session")
def desk_paths(tmp_path_factory):
    """Mid-size dataset for training-behavior tests (150 users, 220 items)."""
    out = tmp_path_factory.mktemp("desk")
    return generate_dataset(out, num_users=150, num_items=220,
                            min_interactions=14, max_interactions=26,
                            clusters=6, affinity=2.8, popularity_scale=0.5,
                            seed=21)


def rating_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


@pytest.fixture()
def write_dataset(tmp_path):
    """Write ad-hoc train/test/negative files and return their paths."""

    def _write(train_lines, test_lines, negative_lines, prefix="mini"):
        train = tmp_path / f"{prefix}.train.rating"
        test = tmp_path / f"{prefix}.test.rating"
        neg = tmp_path / f"{prefix}.test.negative"
        train.write_text("\n".join(train_lines) + "\n", encoding="utf-8")
        test.write_text("\n".join(test_lines) + "\n", encoding="utf-8")
        neg.write_text("\n".join(negative_lines) + "\n", encoding="utf-8")
        return train, test, neg

    return _write
