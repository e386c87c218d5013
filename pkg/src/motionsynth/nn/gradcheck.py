"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .optim import ParamStore
from .tensor import Tensor


def grad_check(loss_fn: Callable[[], Tensor], store: ParamStore, h: float = 1e-5,
               coords: int = 32, seed: int = 0, details: bool = False):
    """Max relative error between backprop and central differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values.
    Tensors larger than ``coords`` entries are probed at ``coords`` positions
    chosen by ``seed``; smaller ones are probed everywhere. The error for one
    coordinate is ``|g_a - g_n| / max(1e-8, |g_a| + |g_n|)``.
    """
    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    report = {}
    for name, p in store.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size) if flat.size <= coords else \
            np.sort(rng.choice(flat.size, size=coords, replace=False))
        err = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            numeric = (up - down) / (2 * h)
            a = analytic.reshape(-1)[i]
            err = max(err, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
        report[name] = err
        worst = max(worst, err)
    store.zero_grad()
    return (worst, report) if details else worst
