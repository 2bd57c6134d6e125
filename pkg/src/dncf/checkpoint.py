"""Named-tensor checkpoint files.

Binary layout (all integers little-endian):

    magic   8 bytes  b"DNCFCKPT"
    version uint32   currently 1
    count   uint32   number of tensors
    then per tensor, in ascending name order:
        name_len uint32, name (UTF-8)
        rank     uint32
        dims     rank x uint64
        payload  prod(dims) x float64 little-endian

Model checkpoints add reserved ``spec/...`` tensors describing the model
variant and dataset dimensions so a file is self-contained; round-trips
are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import MODEL_KINDS, Model, ModelSpec, build_model, load_params
from .nn import COMBINER_KINDS
from .tensor import SeededRng

MAGIC = b"DNCFCKPT"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(tensors))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        blob += arr.astype("<f8", copy=False).tobytes()
    path.write_bytes(bytes(blob))


def load_tensors(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    offset = 8

    def read(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(raw):
            raise DataError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, view, offset)
        offset += size
        return vals

    version, count = read("<II")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = read("<I")
        if offset + name_len > len(raw):
            raise DataError(f"{path}: truncated checkpoint")
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = read("<I")
        dims = read(f"<{rank}Q") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        size = n * 8
        if offset + size > len(raw):
            raise DataError(f"{path}: truncated payload for tensor {name!r}")
        arr = np.frombuffer(view[offset:offset + size], dtype="<f8").copy()
        offset += size
        tensors[name] = arr.reshape(dims)
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors


# -- model-level helpers ------------------------------------------------

_NONE = -1.0


def _spec_tensors(spec: ModelSpec, num_users: int, num_items: int
                  ) -> dict[str, np.ndarray]:
    layers = (np.array([_NONE]) if spec.mlp_layers is None
              else np.array(spec.mlp_layers, dtype=np.float64))
    return {
        "spec/kind": np.array([MODEL_KINDS.index(spec.kind)], dtype=np.float64),
        "spec/factors": np.array([spec.factors], dtype=np.float64),
        "spec/combiner": np.array([COMBINER_KINDS.index(spec.combiner)],
                                  dtype=np.float64),
        "spec/layers": layers,
        "spec/dmlp_embed": np.array([_NONE if spec.dmlp_embed is None
                                     else spec.dmlp_embed]),
        "spec/attn_hidden": np.array([_NONE if spec.attn_hidden is None
                                      else spec.attn_hidden]),
        "spec/mask_target": np.array([float(spec.mask_history_target)]),
        "spec/num_users": np.array([float(num_users)]),
        "spec/num_items": np.array([float(num_items)]),
    }


def _spec_from_tensors(tensors: dict[str, np.ndarray], path
                       ) -> tuple[ModelSpec, int, int]:
    try:
        kind = MODEL_KINDS[int(tensors["spec/kind"][0])]
        combiner = COMBINER_KINDS[int(tensors["spec/combiner"][0])]
        layers_arr = tensors["spec/layers"]
        if layers_arr.size == 1 and layers_arr[0] == _NONE:
            layers = None
        else:
            layers = tuple(int(w) for w in layers_arr)
        dmlp_embed = tensors["spec/dmlp_embed"][0]
        attn_hidden = tensors["spec/attn_hidden"][0]
        spec = ModelSpec(
            kind=kind,
            factors=int(tensors["spec/factors"][0]),
            mlp_layers=layers,
            combiner=combiner,
            dmlp_embed=None if dmlp_embed == _NONE else int(dmlp_embed),
            attn_hidden=None if attn_hidden == _NONE else int(attn_hidden),
            mask_history_target=bool(tensors["spec/mask_target"][0]),
        )
        num_users = int(tensors["spec/num_users"][0])
        num_items = int(tensors["spec/num_items"][0])
    except (KeyError, IndexError) as exc:
        raise DataError(f"{path}: checkpoint lacks model metadata ({exc})") from None
    return spec, num_users, num_items


def save_model(path, model: Model) -> None:
    """Persist all trainable parameters plus the model/dataset metadata."""
    tensors = {p.name: p.value for p in model.params()}
    tensors.update(_spec_tensors(model.spec, model.num_users, model.num_items))
    save_tensors(path, tensors)


def load_model(path) -> Model:
    """Rebuild the model a checkpoint describes; attach a store before use."""
    tensors = load_tensors(path)
    spec, num_users, num_items = _spec_from_tensors(tensors, path)
    model = build_model(spec, num_users, num_items, SeededRng(0))
    load_params(model, tensors)
    return model
