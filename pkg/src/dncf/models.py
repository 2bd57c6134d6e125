"""The five scorers: the popularity baseline plus four trainable
dual-embedding models, with batched manual forward/backward and stable
parameter enumeration for the optimizer and checkpoints.

Tables per dual-embedding parameter set (width k):
  user_id   (num_users x k)  primitive user embeddings
  item_id   (num_items x k)  primitive item embeddings
  user_hist (num_items x k)  item-indexed rows whose normalized sum over a
                             user's interacted items forms the user's
                             history embedding
  item_hist (num_users x k)  user-indexed rows aggregated the same way into
                             the item's history embedding
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionStore
from .errors import ConfigError, DataError, FusionError
from .nn import (DenseLayer, EmbeddingTable, HistoryLookup, OutputHead, Param,
                 make_combiner, sigmoid)
from .tensor import SeededRng

MODEL_KINDS = ("itempop", "dgmf", "dmlp", "dnmf", "dncf_mf")


@dataclass
class ModelSpec:
    """Declarative description of one model variant.

    ``mlp_layers`` lists hidden widths; ``None`` selects the default tower
    (4f, 2f, f) whose last width equals ``factors`` (the predictive
    factors), ``()`` removes all hidden layers so the input representation
    feeds the prediction layer directly. ``combiner`` applies to dgmf and
    to the element-wise part of dnmf; the MLP paths always concatenate.
    ``dmlp_embed`` sets the embedding width of dnmf's MLP part (defaults to
    ``factors``). ``mask_history_target`` excludes a training positive from
    its own history row (off by default).
    """

    kind: str
    factors: int = 64
    mlp_layers: tuple[int, ...] | None = None
    combiner: str = "sum"
    dmlp_embed: int | None = None
    attn_hidden: int | None = None
    mask_history_target: bool = False

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected "
                              f"one of {MODEL_KINDS}")
        if self.factors <= 0:
            raise ConfigError(f"factors must be positive, got {self.factors}")
        if self.mlp_layers is not None:
            self.mlp_layers = tuple(int(w) for w in self.mlp_layers)
            if any(w <= 0 for w in self.mlp_layers):
                raise ConfigError(f"layer widths must be positive: {self.mlp_layers}")
        if self.kind == "dgmf" and self.mlp_layers:
            raise ConfigError("dgmf has no hidden layers; the element-wise "
                              "product feeds the prediction layer directly")
        if self.kind == "dncf_mf" and self.combiner != "sum":
            raise ConfigError("dncf_mf combines embeddings by element-wise "
                              "sum only")
        if self.kind in ("dmlp", "dnmf") and self.mlp_layers:
            if self.mlp_layers[-1] != self.factors:
                raise ConfigError(f"last hidden width {self.mlp_layers[-1]} must "
                                  f"equal the predictive factors {self.factors}")

    @property
    def mlp_embed_width(self) -> int:
        return self.factors if self.dmlp_embed is None else int(self.dmlp_embed)

    def resolved_layers(self) -> tuple[int, ...]:
        """Hidden widths with the (4f, 2f, f) tower default."""
        if self.mlp_layers is not None:
            return self.mlp_layers
        base = self.mlp_embed_width if self.kind == "dnmf" else self.factors
        return (4 * base, 2 * base, self.factors)


class DualEmbeddingCore:
    """One parameter set of dual embeddings plus its combiner pair.

    Produces the final user representation v_u = g(p_u, m_u) and item
    representation v_i = g(q_i, n_i) for a batch, and routes gradients back
    into the four tables and the combiner parameters.
    """

    def __init__(self, prefix: str, num_users: int, num_items: int, k: int,
                 combiner: str, attn_hidden: int | None, rng: SeededRng,
                 init_std: float = 0.01):
        self.k = k
        self.combiner_kind = combiner
        self.user_id = EmbeddingTable(prefix + "user_id", num_users, k, rng,
                                      role="user_id", init_std=init_std)
        self.item_id = EmbeddingTable(prefix + "item_id", num_items, k, rng,
                                      role="item_id", init_std=init_std)
        self.user_hist = EmbeddingTable(prefix + "user_hist", num_items, k, rng,
                                        role="user_hist", init_std=init_std)
        self.item_hist = EmbeddingTable(prefix + "item_hist", num_users, k, rng,
                                        role="item_hist", init_std=init_std)
        self.user_combiner = make_combiner(combiner, k, name=prefix + "user_attn",
                                           hidden=attn_hidden, rng=rng,
                                           init_std=init_std)
        self.item_combiner = make_combiner(combiner, k, name=prefix + "item_attn",
                                           hidden=attn_hidden, rng=rng,
                                           init_std=init_std)
        self._user_lookup: HistoryLookup | None = None
        self._item_lookup: HistoryLookup | None = None
        self._batch: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def out_dim(self) -> int:
        return self.user_combiner.out_dim(self.k)

    def tables(self) -> list[EmbeddingTable]:
        return [self.user_id, self.item_id, self.user_hist, self.item_hist]

    def params(self) -> list[Param]:
        out = [t.param for t in self.tables()]
        out += self.user_combiner.params() + self.item_combiner.params()
        return out

    def attach(self, store: InteractionStore) -> None:
        if store.num_users != self.user_id.rows or store.num_items != self.item_id.rows:
            raise DataError(f"store is {store.num_users} users x "
                            f"{store.num_items} items but model expects "
                            f"{self.user_id.rows} x {self.item_id.rows}")
        self._user_lookup = HistoryLookup(store.user_matrix(), self.user_hist)
        self._item_lookup = HistoryLookup(store.item_matrix(), self.item_hist)

    def forward(self, users: np.ndarray, items: np.ndarray,
                mask_items: np.ndarray | None = None,
                mask_users: np.ndarray | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
        if self._user_lookup is None:
            raise ConfigError("model not attached to an interaction store")
        p_u = self.user_id.lookup(users)
        q_i = self.item_id.lookup(items)
        m_u = self._user_lookup.forward(users, exclude_cols=mask_items)
        n_i = self._item_lookup.forward(items, exclude_cols=mask_users)
        v_u = self.user_combiner.forward(p_u, m_u)
        v_i = self.item_combiner.forward(q_i, n_i)
        self._batch = (users, items)
        return v_u, v_i

    def backward(self, d_vu: np.ndarray, d_vi: np.ndarray) -> None:
        users, items = self._batch
        self._batch = None
        d_pu, d_mu = self.user_combiner.backward(d_vu)
        d_qi, d_ni = self.item_combiner.backward(d_vi)
        self.user_id.accumulate(users, d_pu)
        self.item_id.accumulate(items, d_qi)
        self._user_lookup.backward(d_mu)
        self._item_lookup.backward(d_ni)


class Model:
    """Shared scorer interface; concrete kinds override the hooks."""

    kind = "base"

    def __init__(self, spec: ModelSpec, num_users: int, num_items: int):
        self.spec = spec
        self.num_users = num_users
        self.num_items = num_items

    @property
    def trainable(self) -> bool:
        return bool(self.params())

    def params(self) -> list[Param]:
        return []

    def attach(self, store: InteractionStore) -> None:
        raise NotImplementedError

    def forward(self, users, items, labels=None) -> np.ndarray:
        """Training forward: probabilities for a batch, caches for backward."""
        raise NotImplementedError

    def backward(self, d_yhat: np.ndarray) -> None:
        raise NotImplementedError

    def score_pairs(self, users, items) -> np.ndarray:
        """Ranking scores without gradient bookkeeping requirements."""
        raise NotImplementedError

    def score(self, u: int, i: int) -> float:
        return float(self.score_pairs(np.array([u]), np.array([i]))[0])

    def _mask_arrays(self, users, items, labels):
        if not self.spec.mask_history_target or labels is None:
            return None, None
        on = np.asarray(labels) > 0
        mask_items = np.where(on, items, -1)
        mask_users = np.where(on, users, -1)
        return mask_items, mask_users


class ItemPop(Model):
    """Non-personalized baseline: rank items by training popularity."""

    kind = "itempop"

    def __init__(self, spec, num_users, num_items):
        super().__init__(spec, num_users, num_items)
        self._pop: np.ndarray | None = None

    def attach(self, store: InteractionStore) -> None:
        if store.num_items != self.num_items:
            raise DataError(f"store has {store.num_items} items, model "
                            f"expects {self.num_items}")
        self._pop = store.popularity().astype(np.float64)

    def score_pairs(self, users, items) -> np.ndarray:
        if self._pop is None:
            raise ConfigError("model not attached to an interaction store")
        return self._pop[np.asarray(items, dtype=np.int64)]


class DGMF(Model):
    """Element-wise product of the combined user/item representations,
    projected straight to the prediction layer (no hidden layers)."""

    kind = "dgmf"

    def __init__(self, spec, num_users, num_items, rng, init_std=0.01):
        super().__init__(spec, num_users, num_items)
        self.core = DualEmbeddingCore("", num_users, num_items, spec.factors,
                                      spec.combiner, spec.attn_hidden, rng,
                                      init_std)
        self.head = OutputHead("head", self.core.out_dim, rng, init_std)
        self._cache = None

    def params(self):
        return self.core.params() + self.head.params()

    def attach(self, store):
        self.core.attach(store)

    def forward(self, users, items, labels=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        mask_items, mask_users = self._mask_arrays(users, items, labels)
        v_u, v_i = self.core.forward(users, items, mask_items, mask_users)
        phi = v_u * v_i
        y_hat = sigmoid(self.head.forward(phi))
        self._cache = (v_u, v_i, y_hat)
        return y_hat

    def backward(self, d_yhat):
        v_u, v_i, y_hat = self._cache
        self._cache = None
        d_logit = d_yhat * y_hat * (1.0 - y_hat)
        d_phi = self.head.backward(d_logit)
        self.core.backward(d_phi * v_i, d_phi * v_u)

    def score_pairs(self, users, items):
        return self.forward(users, items)


class DMLP(Model):
    """Concatenated dual embeddings fed through a ReLU tower."""

    kind = "dmlp"

    def __init__(self, spec, num_users, num_items, rng, init_std=0.01):
        super().__init__(spec, num_users, num_items)
        self.core = DualEmbeddingCore("", num_users, num_items, spec.factors,
                                      "concat", None, rng, init_std)
        widths = spec.resolved_layers()
        d_in = 4 * spec.factors
        self.layers = []
        for idx, w in enumerate(widths):
            self.layers.append(DenseLayer(f"layers/{idx}", d_in, w, rng,
                                          activation="relu", init_std=init_std))
            d_in = w
        self.head = OutputHead("head", d_in, rng, init_std)
        self._cache = None

    def params(self):
        out = self.core.params()
        for layer in self.layers:
            out += layer.params()
        return out + self.head.params()

    def attach(self, store):
        self.core.attach(store)

    def forward(self, users, items, labels=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        mask_items, mask_users = self._mask_arrays(users, items, labels)
        v_u, v_i = self.core.forward(users, items, mask_items, mask_users)
        z = np.concatenate([v_u, v_i], axis=1)
        for layer in self.layers:
            z = layer.forward(z)
        y_hat = sigmoid(self.head.forward(z))
        self._cache = (v_u.shape[1], y_hat)
        return y_hat

    def backward(self, d_yhat):
        split, y_hat = self._cache
        self._cache = None
        d_logit = d_yhat * y_hat * (1.0 - y_hat)
        d_z = self.head.backward(d_logit)
        for layer in reversed(self.layers):
            d_z = layer.backward(d_z)
        self.core.backward(d_z[:, :split], d_z[:, split:])

    def score_pairs(self, users, items):
        return self.forward(users, items)


class DNMF(Model):
    """Fusion of the element-wise model and the MLP model with disjoint
    embeddings; their output vectors concatenate into one prediction layer."""

    kind = "dnmf"

    def __init__(self, spec, num_users, num_items, rng, init_std=0.01):
        super().__init__(spec, num_users, num_items)
        self.gmf_core = DualEmbeddingCore("gmf/", num_users, num_items,
                                          spec.factors, spec.combiner,
                                          spec.attn_hidden, rng, init_std)
        d0 = spec.mlp_embed_width
        self.mlp_core = DualEmbeddingCore("mlp/", num_users, num_items, d0,
                                          "concat", None, rng, init_std)
        widths = spec.resolved_layers()
        d_in = 4 * d0
        self.layers = []
        for idx, w in enumerate(widths):
            self.layers.append(DenseLayer(f"mlp/layers/{idx}", d_in, w, rng,
                                          activation="relu", init_std=init_std))
            d_in = w
        self.mlp_out_dim = d_in
        self.head = OutputHead("head", self.gmf_core.out_dim + d_in, rng, init_std)
        self._cache = None

    def params(self):
        out = self.gmf_core.params() + self.mlp_core.params()
        for layer in self.layers:
            out += layer.params()
        return out + self.head.params()

    def attach(self, store):
        self.gmf_core.attach(store)
        self.mlp_core.attach(store)

    def forward(self, users, items, labels=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        mask_items, mask_users = self._mask_arrays(users, items, labels)
        vg_u, vg_i = self.gmf_core.forward(users, items, mask_items, mask_users)
        phi_g = vg_u * vg_i
        vm_u, vm_i = self.mlp_core.forward(users, items, mask_items, mask_users)
        z = np.concatenate([vm_u, vm_i], axis=1)
        for layer in self.layers:
            z = layer.forward(z)
        fused = np.concatenate([phi_g, z], axis=1)
        y_hat = sigmoid(self.head.forward(fused))
        self._cache = (vg_u, vg_i, vm_u.shape[1], phi_g.shape[1], y_hat)
        return y_hat

    def backward(self, d_yhat):
        vg_u, vg_i, mlp_split, gmf_width, y_hat = self._cache
        self._cache = None
        d_logit = d_yhat * y_hat * (1.0 - y_hat)
        d_fused = self.head.backward(d_logit)
        d_phi_g = d_fused[:, :gmf_width]
        d_z = d_fused[:, gmf_width:]
        for layer in reversed(self.layers):
            d_z = layer.backward(d_z)
        self.mlp_core.backward(d_z[:, :mlp_split], d_z[:, mlp_split:])
        self.gmf_core.backward(d_phi_g * vg_i, d_phi_g * vg_u)

    def score_pairs(self, users, items):
        return self.forward(users, items)

    def intermediate_vectors(self, users, items) -> tuple[np.ndarray, np.ndarray]:
        """The two penultimate representations (element-wise part, MLP part)."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        vg_u, vg_i = self.gmf_core.forward(users, items)
        phi_g = vg_u * vg_i
        vm_u, vm_i = self.mlp_core.forward(users, items)
        z = np.concatenate([vm_u, vm_i], axis=1)
        for layer in self.layers:
            z = layer.forward(z)
        return phi_g, z


class DNCFMF(Model):
    """Inner product of sum-combined dual embeddings; raw scores for
    ranking, sigmoid-wrapped only when trained with cross-entropy."""

    kind = "dncf_mf"

    def __init__(self, spec, num_users, num_items, rng, init_std=0.01):
        super().__init__(spec, num_users, num_items)
        self.core = DualEmbeddingCore("", num_users, num_items, spec.factors,
                                      "sum", None, rng, init_std)
        self._cache = None

    def params(self):
        return self.core.params()

    def attach(self, store):
        self.core.attach(store)

    def forward(self, users, items, labels=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        mask_items, mask_users = self._mask_arrays(users, items, labels)
        v_u, v_i = self.core.forward(users, items, mask_items, mask_users)
        y_hat = sigmoid(np.sum(v_u * v_i, axis=1))
        self._cache = (v_u, v_i, y_hat)
        return y_hat

    def backward(self, d_yhat):
        v_u, v_i, y_hat = self._cache
        self._cache = None
        d_s = d_yhat * y_hat * (1.0 - y_hat)
        self.core.backward(d_s[:, None] * v_i, d_s[:, None] * v_u)

    def score_pairs(self, users, items):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        v_u, v_i = self.core.forward(users, items)
        return np.sum(v_u * v_i, axis=1)


_MODEL_CLASSES = {"itempop": ItemPop, "dgmf": DGMF, "dmlp": DMLP,
                  "dnmf": DNMF, "dncf_mf": DNCFMF}


def build_model(spec: ModelSpec, num_users: int, num_items: int,
                rng: SeededRng | None = None, init_std: float = 0.01) -> Model:
    """Instantiate a model with Gaussian(0, init_std) parameters."""
    cls = _MODEL_CLASSES[spec.kind]
    if spec.kind == "itempop":
        return cls(spec, num_users, num_items)
    if rng is None:
        rng = SeededRng(0)
    return cls(spec, num_users, num_items, rng, init_std)


def load_params(model: Model, tensors: dict[str, np.ndarray],
                error=DataError) -> None:
    """Overwrite a model's parameters from named tensors, shape-checked."""
    for p in model.params():
        if p.name not in tensors:
            raise error(f"missing tensor {p.name!r}")
        src = np.asarray(tensors[p.name], dtype=np.float64)
        if src.shape != p.value.shape:
            raise error(f"tensor {p.name!r}: expected shape {p.value.shape}, "
                        f"found {src.shape}")
        p.value[...] = src


def fuse(dgmf_tensors: dict[str, np.ndarray], dmlp_tensors: dict[str, np.ndarray],
         spec: ModelSpec, num_users: int, num_items: int) -> DNMF:
    """Initialize a fused model from pre-trained part checkpoints.

    Part parameters copy verbatim; the fused prediction weights are the
    concatenation of the two pre-trained prediction weights (element-wise
    part first) and the fused bias is their mean. Fine-tuning the result
    must use plain SGD: the parts' moment statistics are not carried over.
    """
    if spec.kind != "dnmf":
        raise ConfigError(f"fusion produces a dnmf model, got spec kind {spec.kind!r}")
    model = build_model(spec, num_users, num_items, SeededRng(0))

    def take(src: dict, name: str, want_shape, label: str) -> np.ndarray:
        if name not in src:
            raise FusionError(f"{label} checkpoint is missing tensor {name!r}")
        arr = np.asarray(src[name], dtype=np.float64)
        if arr.shape != tuple(want_shape):
            raise FusionError(f"{label} tensor {name!r}: expected shape "
                              f"{tuple(want_shape)}, found {arr.shape}")
        return arr

    for p in model.params():
        if p.name.startswith("gmf/"):
            p.value[...] = take(dgmf_tensors, p.name[4:], p.value.shape, "dgmf")
        elif p.name.startswith("mlp/"):
            p.value[...] = take(dmlp_tensors, p.name[4:], p.value.shape, "dmlp")
    h_g = take(dgmf_tensors, "head/w", (model.gmf_core.out_dim,), "dgmf")
    h_m = take(dmlp_tensors, "head/w", (model.mlp_out_dim,), "dmlp")
    b_g = take(dgmf_tensors, "head/b", (1,), "dgmf")
    b_m = take(dmlp_tensors, "head/b", (1,), "dmlp")
    model.head.h.value[...] = np.concatenate([h_g, h_m])
    model.head.b.value[...] = 0.5 * (b_g + b_m)
    return model


def recover_svdpp(model: DNCFMF) -> DNCFMF:
    """Zero the table behind the item's history embedding, reducing the
    score to (p_u + |R_u|^(-1/2) sum y_j) . q_i."""
    if model.kind != "dncf_mf":
        raise ConfigError("recovery applies to dncf_mf models")
    model.core.item_hist.param.value[...] = 0.0
    return model


def recover_fism(model: DNCFMF) -> DNCFMF:
    """Additionally zero the primitive user embeddings, reducing the score
    to the item-similarity form (|R_u|^(-1/2) sum y_j) . q_i."""
    recover_svdpp(model)
    model.core.user_id.param.value[...] = 0.0
    return model
