"""Finite-difference gradient checks over every differentiable piece at tiny sizes."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import nn
from .long_range import (
    DiscDims, GenDims, discriminate_graph, generate_graph, init_discriminator, init_generator,
    loss_adversarial, loss_position, prepare, take_windows,
)
from .nn import ParamStore
from .short_range import Dims, init_params, training_losses
from .skeleton import DirectionFrame, SkeletonTopology, forward_kinematics

TOLERANCE = 1e-4


def tiny_topology() -> SkeletonTopology:
    """Pelvis with two two-bone legs; feet are joints 2 and 4."""
    return SkeletonTopology([-1, 0, 1, 0, 3], [0.0, 0.12, 0.5, 0.12, 0.5], feet=(2, 4))


def _store(rng, **shapes) -> ParamStore:
    store = ParamStore()
    for name, shape in shapes.items():
        store.add(name, rng.normal(size=shape))
    return store


def _randomize_biases(store: ParamStore, rng, scale: float = 0.2) -> None:
    for name, p in store.items():
        if name.endswith(".b"):
            p.data = rng.normal(scale=scale, size=p.shape)


_ELEMENTWISE: dict[str, Callable] = {
    "add_sub": lambda t: t + t * 2.0 - 1.0,
    "mul_div": lambda t: t / (t * t + 2.0),
    "pow": lambda t: (t * t + 1.0) ** 1.5,
    "exp": lambda t: nn.exp(t * 0.3),
    "log": lambda t: nn.log(t * t + 1.0),
    "sqrt": lambda t: nn.sqrt(t * t + 1.0),
    "sin": nn.sin,
    "cos": nn.cos,
    "tanh": nn.tanh,
    "sigmoid": nn.sigmoid,
    "leaky_relu": nn.leaky_relu,
    "sum_mean": lambda t: t.mean(axis=0) - t.sum(axis=1, keepdims=True),
    "reshape_transpose": lambda t: nn.transpose(nn.reshape(t, (4, 3)), (1, 0)) * t,
    "getitem": lambda t: t[:, 1:3] * t[:, 0:2],
    "concat": lambda t: nn.concat([t, t * 2.0], axis=1),
    "stack": lambda t: nn.stack([t, t * t], axis=1),
    "where": lambda t: nn.where(np.eye(3, 4, dtype=bool), t, t * t),
    "matmul": lambda t: t.swapaxes(0, 1) @ t,
    "normalize": lambda t: nn.normalize(t)[:, :2],
}


def primitive_checks(seed: int = 0) -> dict:
    """Max relative gradient error for each engine primitive."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, op in _ELEMENTWISE.items():
        store = _store(rng, t=(3, 4))
        out[name] = nn.grad_check(lambda: (op(store["t"]) ** 2).sum(), store)
    store = _store(rng, x=(4, 3), w=(3, 2), b=(2,))
    target = rng.normal(size=(4, 2))
    out["dense_mse"] = nn.grad_check(lambda: nn.mse_loss(nn.dense(store["x"], store["w"], store["b"]), target), store)
    store = _store(rng, x=(2, 3, 9), w=(4, 3, 3), b=(4,))
    out["conv1d"] = nn.grad_check(lambda: (nn.conv1d(store["x"], store["w"], store["b"]) ** 2).sum(), store)
    store = _store(rng, hc=(2, 5, 3), hs=(2, 5, 2), W=(3, 4, 2))
    out["bilinear"] = nn.grad_check(lambda: (nn.bilinear(store["hc"], store["hs"], store["W"]) ** 2).mean(), store)
    store = _store(rng, H=(2, 6, 3))
    out["gram"] = nn.grad_check(lambda: (nn.gram(store["H"]) ** 2).sum(), store)
    store = ParamStore()
    nn.init_lstm(store, "cell", 3, 4, rng)
    _randomize_biases(store, rng)
    for name, shape in (("x", (2, 3)), ("h0", (2, 4)), ("c0", (2, 4))):
        store.add(name, rng.normal(size=shape))

    def lstm_loss():
        h, c = store["h0"], store["c0"]
        for _ in range(3):
            h, c = nn.lstm_cell(store["x"], h, c, store["cell.wx"], store["cell.wh"], store["cell.b"])
        return (h * h).sum() + c.sum()

    out["lstm"] = nn.grad_check(lstm_loss, store)
    return out


def short_range_check(seed: int = 0) -> float:
    """Full short-range objective at C_ctn=6, C_sty=4, C_out=8, M=16, J=5."""
    rng = np.random.default_rng(seed)
    store = init_params(Dims(5, 6, 4, 8, 6), rng)
    _randomize_biases(store, rng, 0.3)
    x = rng.normal(size=(3, 31, 16))
    pair = np.array([2, 0, 1])
    return nn.grad_check(lambda: training_losses(store, x, np.random.default_rng(0), pair)["total"], store)


def _random_pose(rng, topo: SkeletonTopology) -> np.ndarray:
    v = rng.normal(size=(topo.joint_count - 1, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return forward_kinematics(DirectionFrame(v, rng.normal(size=3)), topo)


def long_range_check(seed: int = 0, N: int = 8) -> float:
    """Full generator objective ``L_pos + 0.01 L_G`` on a tiny skeleton at transition length N."""
    rng = np.random.default_rng(seed)
    topo = tiny_topology()
    starts, ends = [], []
    for _ in range(2):
        s, e = _random_pose(rng, topo), _random_pose(rng, topo)
        starts.append(s)
        ends.append(e - e[topo.root] + s[topo.root] + np.array([0.4, 0.0, 0.9]))
    batch = prepare(starts, ends, N, topo)
    gen = init_generator(GenDims(5, 6, 6), rng)
    _randomize_biases(gen, rng)
    disc = init_discriminator(DiscDims(5, 4, 8, 2), rng)
    target = batch.start[:, None] + rng.normal(scale=0.1, size=(2, N - 2, 5, 3))
    win_starts = np.array([0, N - 6])
    # window headings are constants of the graph; read them from frozen poses
    frozen = generate_graph(gen, batch, topo, 6).positions.data

    def loss():
        out = generate_graph(gen, batch, topo, 6)
        _, l_g = loss_adversarial(np.ones(1), discriminate_graph(disc, take_windows(out.dirs, frozen, win_starts, 4, topo), 2))
        return loss_position(target, out.positions) + l_g * 0.01

    return nn.grad_check(loss, gen)


def discriminator_check(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    disc = init_discriminator(DiscDims(5, 4, 8, 2), rng)
    _randomize_biases(disc, rng, 0.3)
    x = rng.normal(size=(6, 48))
    return nn.grad_check(lambda: discriminate_graph(disc, x, 2).sum(), disc)


def gradcheck_suite(seed: int = 0) -> dict:
    """Every primitive plus both full models; values are max relative errors."""
    out = {f"primitive.{k}": v for k, v in primitive_checks(seed).items()}
    out["model.short_range"] = short_range_check(seed)
    out["model.long_range"] = long_range_check(seed)
    out["model.discriminator"] = discriminator_check(seed)
    return out
