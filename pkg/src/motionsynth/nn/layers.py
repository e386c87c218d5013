"""Parameter registration helpers and composite layers."""
from __future__ import annotations

import numpy as np

from .optim import ParamStore, xavier_uniform
from .tensor import Tensor, add, matmul, sigmoid, tanh


def init_dense(store: ParamStore, name: str, n_in: int, n_out: int, rng: np.random.Generator):
    store.add(f"{name}.w", xavier_uniform(rng, (n_in, n_out), n_in, n_out))
    store.add(f"{name}.b", np.zeros(n_out))


def init_conv(store: ParamStore, name: str, c_in: int, c_out: int, width: int, rng: np.random.Generator):
    store.add(f"{name}.w", xavier_uniform(rng, (c_out, c_in, width), c_in * width, c_out * width))
    store.add(f"{name}.b", np.zeros(c_out))


def init_bilinear(store: ParamStore, name: str, c_ctn: int, c_out: int, c_sty: int, rng: np.random.Generator):
    store.add(f"{name}.w", xavier_uniform(rng, (c_ctn, c_out, c_sty), c_ctn * c_sty, c_out))


def init_lstm(store: ParamStore, name: str, n_in: int, n_hidden: int, rng: np.random.Generator):
    """Gate blocks are packed as (input, forget, candidate, output)."""
    store.add(f"{name}.wx", xavier_uniform(rng, (n_in, 4 * n_hidden), n_in, 4 * n_hidden))
    store.add(f"{name}.wh", xavier_uniform(rng, (n_hidden, 4 * n_hidden), n_hidden, 4 * n_hidden))
    store.add(f"{name}.b", np.zeros(4 * n_hidden))


def lstm_cell(x, h_prev, c_prev, wx, wh, b) -> tuple[Tensor, Tensor]:
    """Standard LSTM update on ``(..., n_in)`` inputs."""
    gates = add(add(matmul(x, wx), matmul(h_prev, wh)), b)
    H = wh.shape[0]
    i = sigmoid(gates[..., 0:H])
    f = sigmoid(gates[..., H:2 * H])
    g = tanh(gates[..., 2 * H:3 * H])
    o = sigmoid(gates[..., 3 * H:4 * H])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c
