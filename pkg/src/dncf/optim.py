"""Mini-batch Adam and plain SGD with L2 regularization.

``step`` consumes gradients accumulated for exactly one batch: it divides
them by the batch size (the objective is the batch mean), adds the L2 term
to weight-like tensors (bias vectors are exempt), validates finiteness,
applies the update and clears the accumulators. A non-finite gradient
aborts the step before any parameter changes.

Updates run in place against per-parameter scratch buffers: the embedding
tables are updated densely every step, so avoiding temporaries roughly
halves the step cost at benchmark scale.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError
from .nn import Param


class SGD:
    """theta <- theta - lr * g."""

    kind = "sgd"

    def __init__(self, lr: float = 0.001, l2: float = 0.0):
        self.lr = float(lr)
        self.l2 = float(l2)
        self._g: dict[str, np.ndarray] = {}

    def _buffer(self, store: dict, p: Param) -> np.ndarray:
        buf = store.get(p.name)
        if buf is None or buf.shape != p.value.shape:
            buf = store[p.name] = np.empty_like(p.value)
        return buf

    def _effective_grads(self, params: list[Param], batch_size: int
                         ) -> list[np.ndarray]:
        """Mean gradient plus L2 term per parameter, all validated before
        any update is applied."""
        if batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        inv_b = 1.0 / batch_size
        grads = []
        for p in params:
            g = self._buffer(self._g, p)
            np.multiply(p.grad, inv_b, out=g)
            if self.l2 and p.l2:
                g += self.l2 * p.value
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for tensor {p.name!r}")
            grads.append(g)
        return grads

    def step(self, params: list[Param], batch_size: int) -> None:
        grads = self._effective_grads(params, batch_size)
        for p, g in zip(params, grads):
            g *= self.lr
            p.value -= g
            p.zero_grad()


class Adam(SGD):
    """Bias-corrected adaptive moments; the standard constants by default."""

    kind = "adam"

    def __init__(self, lr: float = 0.001, l2: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(lr, l2)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._tmp: dict[str, np.ndarray] = {}

    def step(self, params: list[Param], batch_size: int) -> None:
        grads = self._effective_grads(params, batch_size)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1
        for p, g in zip(params, grads):
            m = self._m.get(p.name)
            if m is None:
                m = self._m[p.name] = np.zeros_like(p.value)
                self._v[p.name] = np.zeros_like(p.value)
            v = self._v[p.name]
            tmp = self._buffer(self._tmp, p)

            # m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=tmp)
            m += tmp
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp

            # theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
            np.divide(v, bc2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= step_size
            p.value -= tmp
            p.zero_grad()


def make_optimizer(kind: str, lr: float, l2: float = 0.0):
    if kind == "sgd":
        return SGD(lr, l2)
    if kind == "adam":
        return Adam(lr, l2)
    raise ConfigError(f"unknown optimizer {kind!r}; expected 'adam' or 'sgd'")
