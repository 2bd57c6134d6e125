import numpy as np
import pytest

from dncf import (ModelSpec, SeededRng, build_model, load_model, load_tensors,
                  save_model, save_tensors)
from dncf.checkpoint import MAGIC
from dncf.errors import DataError


def test_tensor_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {
        "a/w": rng.normal(size=(3, 4)),
        "a/b": rng.normal(size=5),
        "deep/nested/name": rng.normal(size=(2, 2, 2)),
        "empty": np.empty((0,)),
    }
    path = tmp_path / "t.ckpt"
    save_tensors(path, tensors)
    loaded = load_tensors(path)
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].shape == tensors[name].shape
        assert np.array_equal(loaded[name], tensors[name])
    second = tmp_path / "t2.ckpt"
    save_tensors(second, loaded)
    assert path.read_bytes() == second.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        load_tensors(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_tensors(path, {"w": np.ones((4, 4))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])
    with pytest.raises(DataError, match="truncated"):
        load_tensors(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_tensors(path, {"w": np.ones(3)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(DataError, match="trailing"):
        load_tensors(path)


@pytest.mark.parametrize("spec", [
    ModelSpec("dgmf", factors=4, combiner="attention"),
    ModelSpec("dmlp", factors=4, mlp_layers=(8, 4)),
    ModelSpec("dmlp", factors=4, mlp_layers=()),
    ModelSpec("dnmf", factors=4, dmlp_embed=2),
    ModelSpec("dncf_mf", factors=4),
    ModelSpec("itempop"),
], ids=["dgmf-attn", "dmlp", "dmlp-linear", "dnmf", "dncf_mf", "itempop"])
def test_model_round_trip(tmp_path, spec):
    model = build_model(spec, 6, 9, SeededRng(5), init_std=0.3)
    path = tmp_path / f"{spec.kind}.ckpt"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.spec == spec
    assert loaded.num_users == 6 and loaded.num_items == 9
    originals = {p.name: p.value for p in model.params()}
    for p in loaded.params():
        assert np.array_equal(p.value, originals[p.name])


def test_loaded_model_dimension_mismatch(tmp_path, tiny_store):
    model = build_model(ModelSpec("dgmf", factors=4), 7, 9, SeededRng(0))
    path = tmp_path / "m.ckpt"
    save_model(path, model)
    loaded = load_model(path)
    with pytest.raises(DataError, match=r"7 x 9"):
        loaded.attach(tiny_store)


def test_plain_tensor_file_is_not_a_model(tmp_path):
    path = tmp_path / "plain.ckpt"
    save_tensors(path, {"w": np.ones(3)})
    with pytest.raises(DataError, match="metadata"):
        load_model(path)


def test_magic_constant():
    assert len(MAGIC) == 8
