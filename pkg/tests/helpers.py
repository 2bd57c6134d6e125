"""Shared test utilities: the finite-difference gradient oracle and a tiny
fixed interaction store for model-level checks."""

import numpy as np

from dncf import InteractionStore, ModelSpec, SeededRng, build_model
from dncf.nn import bce_grad, bce_loss

GRADCHECK_PAIRS = [(0, 0), (0, 2), (1, 1), (1, 3), (2, 2), (2, 4), (3, 0),
                   (3, 1), (4, 3), (4, 4), (0, 4), (2, 0)]


def gradcheck_store():
    return InteractionStore.from_pairs(GRADCHECK_PAIRS, num_users=5, num_items=5)


def gradcheck_batch():
    users = np.array([0, 1, 2, 3, 4, 0, 2])
    items = np.array([0, 1, 2, 0, 3, 2, 4])
    labels = np.array([1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0])
    return users, items, labels


def finite_difference_check(spec: ModelSpec, seed: int = 11, h: float = 1e-6,
                            init_std: float = 0.5):
    """Compare every parameter's backward gradient against central finite
    differences of the mean batch loss; returns the worst relative error
    and its location."""
    store = gradcheck_store()
    model = build_model(spec, 5, 5, SeededRng(seed), init_std=init_std)
    model.attach(store)
    users, items, labels = gradcheck_batch()
    batch = len(users)

    def loss():
        return float(bce_loss(model.forward(users, items, labels), labels).mean())

    y = model.forward(users, items, labels)
    model.backward(bce_grad(y, labels))

    worst = 0.0
    where = ""
    for p in model.params():
        analytic = (p.grad / batch).ravel()
        flat = p.value.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss()
            flat[idx] = orig - h
            down = loss()
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            ana = analytic[idx]
            denom = max(abs(fd), abs(ana))
            if denom < 1e-8:
                continue
            err = abs(fd - ana) / denom
            if err > worst:
                worst = err
                where = f"{p.name}[{idx}] fd={fd:.6e} analytic={ana:.6e}"
        p.zero_grad()
    return worst, where
