"""Layers, embedding lookup/aggregation, dual-embedding combiners,
activations, the binary cross-entropy objective and manual gradients.

Forward methods take 2-D float64 batches (one row per instance), cache what
the matching ``backward`` needs, and ``backward`` accumulates gradients,
summed over the batch, into the owning ``Param.grad`` buffers (the
optimizer divides by the batch size at step time) while returning the
gradient w.r.t. its inputs. One instance of a layer/combiner belongs to one
model; forward+backward pairs must not interleave across threads.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError
from .tensor import SeededRng, gaussian_init

PROB_EPS = 1e-12

COMBINER_KINDS = ("sum", "mean", "concat", "attention")


class Param:
    """Named trainable tensor with paired gradient accumulator.

    ``l2`` marks the tensor as weight-like: the optimizer adds the L2 term
    to weights but exempts bias vectors.
    """

    __slots__ = ("name", "value", "grad", "l2")

    def __init__(self, name: str, value: np.ndarray, l2: bool = True):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.l2 = l2

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


# -- activations and loss ----------------------------------------------


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def clamp_probability(y_hat) -> np.ndarray:
    """Clip predictions into [eps, 1-eps] before the log terms."""
    return np.clip(np.asarray(y_hat, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)


def bce_loss(y_hat, y) -> np.ndarray:
    """Per-instance binary cross-entropy -[y log p + (1-y) log(1-p)]."""
    p = clamp_probability(y_hat)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def bce_grad(y_hat, y) -> np.ndarray:
    """d loss / d y_hat for the clamped prediction."""
    p = clamp_probability(y_hat)
    y = np.asarray(y, dtype=np.float64)
    return (p - y) / (p * (1.0 - p))


# -- embeddings --------------------------------------------------------


class EmbeddingTable:
    """Trainable (rows x dim) table with a paired gradient accumulator.

    ``role`` records which embedding the table backs: ``user_id`` (one row
    per user), ``item_id`` (one row per item), ``user_hist`` (item-indexed
    rows aggregated over a user's interacted items into the user's history
    embedding) or ``item_hist`` (user-indexed rows aggregated over an
    item's interacting users).
    """

    def __init__(self, name: str, rows: int, dim: int, rng: SeededRng | None = None,
                 role: str = "user_id", init_std: float = 0.01,
                 values: np.ndarray | None = None):
        if dim <= 0:
            raise ConfigError(f"embedding dim must be positive, got {dim}")
        if values is None:
            values = gaussian_init(rows, dim, 0.0, init_std, rng)
        self.param = Param(name, values)
        if self.param.value.shape != (rows, dim):
            raise ShapeError(f"{name}: expected shape {(rows, dim)}, "
                             f"got {self.param.value.shape}")
        self.role = role

    @property
    def rows(self) -> int:
        return self.param.value.shape[0]

    @property
    def dim(self) -> int:
        return self.param.value.shape[1]

    def _check_indices(self, idx: np.ndarray) -> None:
        if idx.size and (idx.min() < 0 or idx.max() >= self.rows):
            raise IndexError(f"{self.param.name}: index out of range "
                             f"[0, {self.rows})")

    def lookup(self, indices) -> np.ndarray:
        """Gather rows; returns a copy, never a view."""
        idx = np.asarray(indices, dtype=np.int64)
        self._check_indices(np.atleast_1d(idx))
        return self.param.value[idx]

    def accumulate(self, indices, grads) -> None:
        """Scatter-add row gradients (duplicate indices accumulate)."""
        np.add.at(self.param.grad, np.asarray(indices, dtype=np.int64), grads)


def id_embedding(table: EmbeddingTable, index: int) -> np.ndarray:
    """Row lookup: the one-hot x table product."""
    return table.lookup(int(index))


def history_embedding(table: EmbeddingTable, neighbors) -> np.ndarray:
    """|R|^(-1/2)-normalized sum of the neighbors' rows; empty -> zeros."""
    idx = np.asarray(neighbors, dtype=np.int64)
    if idx.size == 0:
        return np.zeros(table.dim)
    return table.lookup(idx).sum(axis=0) / np.sqrt(idx.size)


class HistoryLookup:
    """Batched history embeddings over one side of the interaction store.

    ``adjacency`` row ``r`` lists the neighbors of index ``r`` (user side:
    rows are users, columns are items, so the table is item-indexed).
    ``forward`` returns |R|^(-1/2) * sum of table rows per adjacency row;
    rows with empty history yield zeros. ``exclude_cols[r] >= 0`` drops
    that column from row ``r``'s own history (the column must actually be a
    neighbor of ``idx[r]``) and shrinks the normalizer accordingly.
    """

    def __init__(self, adjacency: sp.csr_matrix, table: EmbeddingTable):
        if adjacency.shape[1] != table.rows:
            raise ShapeError(f"adjacency has {adjacency.shape[1]} columns but "
                             f"table {table.param.name} has {table.rows} rows")
        self.adj = adjacency
        self.counts = np.diff(adjacency.indptr).astype(np.float64)
        self.table = table
        self._cache = None

    def forward(self, idx: np.ndarray, exclude_cols: np.ndarray | None = None
                ) -> np.ndarray:
        sel = self.adj[idx]
        raw = sel @ self.table.param.value
        cnt = self.counts[idx]
        mask = None
        if exclude_cols is not None:
            mask = exclude_cols >= 0
            if mask.any():
                tgt = exclude_cols[mask]
                raw[mask] -= self.table.param.value[tgt]
                cnt = cnt.copy()
                cnt[mask] -= 1.0
            else:
                mask = None
        coeff = np.where(cnt > 0, 1.0 / np.sqrt(np.maximum(cnt, 1.0)), 0.0)
        self._cache = (sel, coeff, mask, exclude_cols)
        return coeff[:, None] * raw

    def backward(self, upstream: np.ndarray) -> None:
        if self._cache is None:
            raise RuntimeError("backward without matching forward")
        sel, coeff, mask, exclude_cols = self._cache
        self._cache = None
        d_raw = coeff[:, None] * upstream
        self.table.param.grad += sel.T @ d_raw
        if mask is not None:
            np.subtract.at(self.table.param.grad, exclude_cols[mask], d_raw[mask])


# -- combiners ----------------------------------------------------------


class SumCombiner:
    """v = p + m."""

    kind = "sum"

    def out_dim(self, k: int) -> int:
        return k

    def params(self) -> list[Param]:
        return []

    def forward(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        _check_combiner_shapes(p, m)
        return p + m

    def backward(self, d_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return d_v, d_v


class MeanCombiner:
    """v = (p + m) / 2."""

    kind = "mean"

    def out_dim(self, k: int) -> int:
        return k

    def params(self) -> list[Param]:
        return []

    def forward(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        _check_combiner_shapes(p, m)
        return 0.5 * (p + m)

    def backward(self, d_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return 0.5 * d_v, 0.5 * d_v


class ConcatCombiner:
    """v = p (+) m, doubling the width."""

    kind = "concat"

    def __init__(self):
        self._split = None

    def out_dim(self, k: int) -> int:
        return 2 * k

    def params(self) -> list[Param]:
        return []

    def forward(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        self._split = p.shape[-1]
        return np.concatenate([p, m], axis=-1)

    def backward(self, d_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return d_v[..., :self._split], d_v[..., self._split:]


class AttentionCombiner:
    """v = alpha*p + (1-alpha)*m with alpha from a shared scoring network.

    The network scores each embedding with h.relu(x@w + b); alpha is the
    two-way softmax of the two scores, so alpha(p, m) = 1 - alpha(m, p) and
    equal embeddings yield alpha = 1/2.
    """

    kind = "attention"

    def __init__(self, name: str, k: int, hidden: int | None = None,
                 rng: SeededRng | None = None, init_std: float = 0.01):
        hidden = k if hidden is None else int(hidden)
        if hidden <= 0:
            raise ConfigError(f"attention hidden width must be positive, got {hidden}")
        self.w = Param(f"{name}/w", gaussian_init(k, hidden, 0.0, init_std, rng))
        self.b = Param(f"{name}/b", np.zeros(hidden), l2=False)
        self.h = Param(f"{name}/h", gaussian_init(1, hidden, 0.0, init_std, rng)[0])
        self._cache = None

    def out_dim(self, k: int) -> int:
        return k

    def params(self) -> list[Param]:
        return [self.w, self.b, self.h]

    def _score(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        a = x @ self.w.value + self.b.value
        r = relu(a)
        return r @ self.h.value, (x, a, r)

    def attention_weight(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        """alpha for each row, without caching (inspection helper)."""
        sp_, _ = self._score(np.atleast_2d(p))
        sm_, _ = self._score(np.atleast_2d(m))
        return sigmoid(sp_ - sm_)

    def forward(self, p: np.ndarray, m: np.ndarray) -> np.ndarray:
        _check_combiner_shapes(p, m)
        s_p, cache_p = self._score(p)
        s_m, cache_m = self._score(m)
        alpha = sigmoid(s_p - s_m)
        self._cache = (p, m, alpha, cache_p, cache_m)
        return alpha[:, None] * p + (1.0 - alpha)[:, None] * m

    def backward(self, d_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward without matching forward")
        p, m, alpha, cache_p, cache_m = self._cache
        self._cache = None
        d_alpha = np.sum(d_v * (p - m), axis=1)
        d_gate = d_alpha * alpha * (1.0 - alpha)
        d_p = alpha[:, None] * d_v + self._score_backward(d_gate, cache_p)
        d_m = (1.0 - alpha)[:, None] * d_v + self._score_backward(-d_gate, cache_m)
        return d_p, d_m

    def _score_backward(self, d_s: np.ndarray, cache: tuple) -> np.ndarray:
        x, a, r = cache
        self.h.grad += r.T @ d_s
        d_a = (d_s[:, None] * self.h.value) * (a > 0)
        self.w.grad += x.T @ d_a
        self.b.grad += d_a.sum(axis=0)
        return d_a @ self.w.value.T


def _check_combiner_shapes(p: np.ndarray, m: np.ndarray) -> None:
    if p.shape != m.shape:
        raise ShapeError(f"combiner operands differ in shape: "
                         f"{p.shape} vs {m.shape}")


def make_combiner(kind: str, k: int, name: str = "attn",
                  hidden: int | None = None, rng: SeededRng | None = None,
                  init_std: float = 0.01):
    if kind == "sum":
        return SumCombiner()
    if kind == "mean":
        return MeanCombiner()
    if kind == "concat":
        return ConcatCombiner()
    if kind == "attention":
        return AttentionCombiner(name, k, hidden=hidden, rng=rng, init_std=init_std)
    raise ConfigError(f"unknown combiner {kind!r}; expected one of {COMBINER_KINDS}")


def combine(method: str, id_vec: np.ndarray, hist_vec: np.ndarray,
            attn: AttentionCombiner | None = None) -> np.ndarray:
    """Single-vector embedding combination g(id, hist)."""
    if method == "attention":
        if attn is None:
            raise ConfigError("attention combiner requires its parameters")
        comb = attn
    else:
        comb = make_combiner(method, 0)
    p = np.atleast_2d(np.asarray(id_vec, dtype=np.float64))
    m = np.atleast_2d(np.asarray(hist_vec, dtype=np.float64))
    return comb.forward(p, m)[0]


# -- dense layers and head ----------------------------------------------


class DenseLayer:
    """Fully connected layer z_out = act(z_in @ weight + bias).

    weight has shape (d_in, d_out); activation is 'relu' or 'identity'
    and is fixed at construction.
    """

    def __init__(self, name: str, d_in: int, d_out: int,
                 rng: SeededRng | None = None, activation: str = "relu",
                 init_std: float = 0.01):
        if activation not in ("relu", "identity"):
            raise ConfigError(f"unsupported activation {activation!r}")
        self.weight = Param(f"{name}/w", gaussian_init(d_in, d_out, 0.0, init_std, rng))
        self.bias = Param(f"{name}/b", np.zeros(d_out), l2=False)
        self.activation = activation
        self._cache = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, z: np.ndarray) -> np.ndarray:
        if z.shape[-1] != self.weight.value.shape[0]:
            raise ShapeError(f"{self.weight.name}: input width {z.shape[-1]} "
                             f"!= {self.weight.value.shape[0]}")
        pre = z @ self.weight.value + self.bias.value
        self._cache = (z, pre)
        return relu(pre) if self.activation == "relu" else pre

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward without matching forward")
        z, pre = self._cache
        self._cache = None
        d_pre = d_out * (pre > 0) if self.activation == "relu" else d_out
        self.weight.grad += z.T @ d_pre
        self.bias.grad += d_pre.sum(axis=0)
        return d_pre @ self.weight.value.T


def mlp_forward(layers: list[DenseLayer], z0: np.ndarray
                ) -> tuple[np.ndarray, list]:
    """Run the layer stack; returns (z_out, tape of per-layer caches)."""
    z0 = np.asarray(z0, dtype=np.float64)
    single = z0.ndim == 1
    z = np.atleast_2d(z0)
    tape = []
    for layer in layers:
        z = layer.forward(z)
        tape.append(layer._cache)
    return (z[0] if single else z), tape


def mlp_backward(layers: list[DenseLayer], d_out: np.ndarray) -> np.ndarray:
    """Reverse pass over the stack's cached activations."""
    d = np.atleast_2d(d_out)
    for layer in reversed(layers):
        d = layer.backward(d)
    return d


class OutputHead:
    """Prediction layer: logit = phi . h + b."""

    def __init__(self, name: str, dim: int, rng: SeededRng | None = None,
                 init_std: float = 0.01):
        self.h = Param(f"{name}/w", gaussian_init(1, dim, 0.0, init_std, rng)[0])
        self.b = Param(f"{name}/b", np.zeros(1), l2=False)
        self._cache = None

    @property
    def dim(self) -> int:
        return self.h.value.shape[0]

    def params(self) -> list[Param]:
        return [self.h, self.b]

    def forward(self, phi: np.ndarray) -> np.ndarray:
        if phi.shape[-1] != self.dim:
            raise ShapeError(f"{self.h.name}: representation width "
                             f"{phi.shape[-1]} != head width {self.dim}")
        self._cache = phi
        return phi @ self.h.value + self.b.value[0]

    def backward(self, d_logit: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward without matching forward")
        phi = self._cache
        self._cache = None
        self.h.grad += phi.T @ d_logit
        self.b.grad[0] += d_logit.sum()
        return d_logit[:, None] * self.h.value


def predict_head(head: OutputHead, z_out: np.ndarray) -> float:
    """sigma(h . z + b) as a probability in (0, 1)."""
    logit = head.forward(np.atleast_2d(np.asarray(z_out, dtype=np.float64)))
    head._cache = None
    return float(sigmoid(logit)[0])
