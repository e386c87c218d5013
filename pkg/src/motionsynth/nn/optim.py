"""Named parameter collections and the Adam optimizer."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import MissingGrad
from .tensor import Tensor


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 5e-4
    lr_decay: float = 0.97
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")


class ParamStore:
    """Ordered trainable tensors plus their Adam moments and counters."""

    def __init__(self):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.epoch = 0

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def learning_rate(self, cfg: AdamConfig) -> float:
        return cfg.learning_rate * cfg.lr_decay ** self.epoch

    def end_epoch(self):
        self.epoch += 1

    def copy_from(self, other: "ParamStore"):
        for name, t in other.params.items():
            self.params[name].data = t.data.copy()
            self.m[name] = other.m[name].copy()
            self.v[name] = other.v[name].copy()
        self.step, self.epoch = other.step, other.epoch


def xavier_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def adam_step(store: ParamStore, cfg: AdamConfig, allow_missing: bool = False) -> ParamStore:
    """One bias-corrected Adam update with decoupled weight decay.

    Parameters without a gradient raise ``MissingGrad`` unless ``allow_missing``.
    """
    store.step += 1
    lr = store.learning_rate(cfg)
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** store.step
    c2 = 1.0 - b2 ** store.step
    for name, p in store.params.items():
        g = p.grad
        if g is None:
            if allow_missing:
                continue
            raise MissingGrad(f"parameter {name!r} has no gradient")
        m = store.m[name] = b1 * store.m[name] + (1 - b1) * g
        v = store.v[name] = b2 * store.v[name] + (1 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        p.data = p.data - lr * cfg.weight_decay * p.data - lr * update
    return store
