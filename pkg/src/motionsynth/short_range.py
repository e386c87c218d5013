"""Content/style auto-encoder with bilinear fusion, used to restyle reference clips.

Clips are encoded channel-first as ``(C_in, M)`` where ``C_in = 3J + 16``: the
first ``3J`` channels hold joint positions relative to the root's ground point
(y kept absolute), the last 16 the moving route. Each clip is first moved into
its own canonical frame (first root over the origin, facing +z) and features
are standardized with statistics from the training clips.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from . import nn
from .dataset import ROUTE_DIM, MotionClip, extract_route, make_clip
from .errors import CheckpointMismatch, NonFiniteLoss
from .nn import ParamStore, Tensor
from .skeleton import MotionSequence, SkeletonTopology, canonical_transform, reproject
from .validation import check_clips, check_topology_matches, topology_from_meta, topology_meta

CONTENT_KERNELS = (1, 3)
STYLE_KERNEL = 11
STYLE_LAYERS = 4
LOSS_NAMES = ("total", "rec", "cst", "rte", "trn")


# ---------------------------------------------------------------------------
# loss formulas

def _reduce(sq: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return sq.mean()
    if reduction == "sum":
        return sq.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_reconstruction(target, predicted, reduction: str = "mean") -> Tensor:
    """Squared error between pose channels; mean-square unless ``reduction='sum'``."""
    d = nn.as_tensor(predicted) - nn.as_tensor(target)
    return _reduce(d * d, reduction)


def loss_route(route, predicted, reduction: str = "mean") -> Tensor:
    return loss_reconstruction(route, predicted, reduction)


def loss_style_consistency(h_s, rng: np.random.Generator) -> Tensor:
    """Squared distance between two randomly chosen frames of each clip's style features.

    ``h_s`` is ``(C_sty, M)`` or ``(B, C_sty, M)``; one frame pair per clip.
    """
    h_s = nn.as_tensor(h_s)
    batched = h_s if h_s.ndim == 3 else nn.reshape(h_s, (1,) + h_s.shape)
    B, _, M = batched.shape
    i = rng.integers(M, size=B)
    j = rng.integers(M, size=B)
    rows = np.arange(B)
    d = batched[rows, :, i] - batched[rows, :, j]
    return (d * d).mean()


def loss_gram(h_s, h_s_hat) -> Tensor:
    """Mean-square difference of frame-by-frame Gram matrices of ``(..., C, M)`` features."""
    g = nn.gram(nn.as_tensor(h_s).swapaxes(-1, -2))
    g_hat = nn.gram(nn.as_tensor(h_s_hat).swapaxes(-1, -2))
    return nn.mse_loss(g_hat, g)


def loss_total(rec, cst, rte, trn, weights=(0.01, 0.5, 1.0)):
    """``rec + 0.01 cst + 0.5 rte + trn`` (weights configurable)."""
    w_cst, w_rte, w_trn = weights
    return rec + cst * w_cst + rte * w_rte + trn * w_trn


def diversity(clips: Sequence) -> float:
    """Per-frame, per-coordinate standard deviation across clips, averaged."""
    if len(clips) == 0:
        raise ValueError("diversity of an empty clip set")
    pos = np.stack([c.positions if hasattr(c, "positions") else np.asarray(c) for c in clips])
    # centring on the first clip first makes identical clips give exactly 0
    return float((pos - pos[0]).std(axis=0).mean())


# ---------------------------------------------------------------------------
# network graph

@dataclass(frozen=True)
class Dims:
    joints: int
    content: int
    style: int
    fused: int
    hidden: int

    @property
    def c_in(self) -> int:
        return 3 * self.joints + ROUTE_DIM

    @property
    def c_ctn(self) -> int:
        return self.content + ROUTE_DIM


def init_params(dims: Dims, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    nn.init_conv(store, "enc_c.0", dims.c_in, dims.hidden, CONTENT_KERNELS[0], rng)
    nn.init_conv(store, "enc_c.1", dims.hidden, dims.content, CONTENT_KERNELS[1], rng)
    widths = [dims.c_in] + [dims.hidden] * (STYLE_LAYERS - 1) + [dims.style]
    for k in range(STYLE_LAYERS):
        nn.init_conv(store, f"enc_s.{k}", widths[k], widths[k + 1], STYLE_KERNEL, rng)
    nn.init_bilinear(store, "fuse", dims.c_ctn, dims.fused, dims.style, rng)
    nn.init_conv(store, "dec.0", dims.fused, dims.hidden, CONTENT_KERNELS[1], rng)
    nn.init_conv(store, "dec.1", dims.hidden, dims.c_in, CONTENT_KERNELS[0], rng)
    return store


def _conv(store, name, x):
    return nn.conv1d(x, store[f"{name}.w"], store[f"{name}.b"])


def content_graph(store: ParamStore, x) -> Tensor:
    """``(B, C_in, M) -> (B, 16 + content, M)``; the raw route rides in front."""
    x = nn.as_tensor(x)
    h = nn.tanh(_conv(store, "enc_c.1", nn.leaky_relu(_conv(store, "enc_c.0", x))))
    return nn.concat([x[:, -ROUTE_DIM:, :], h], axis=1)


def style_graph(store: ParamStore, x) -> Tensor:
    h = nn.as_tensor(x)
    for k in range(STYLE_LAYERS - 1):
        h = nn.leaky_relu(_conv(store, f"enc_s.{k}", h))
    return nn.tanh(_conv(store, f"enc_s.{STYLE_LAYERS - 1}", h))


def decode_graph(store: ParamStore, h_c, h_s) -> Tensor:
    fused = nn.bilinear(nn.as_tensor(h_c).swapaxes(1, 2), nn.as_tensor(h_s).swapaxes(1, 2), store["fuse.w"])
    h = nn.leaky_relu(_conv(store, "dec.0", fused.swapaxes(1, 2)))
    return _conv(store, "dec.1", h)


def loss_transfer(store: ParamStore, h_c_m, h_s_n) -> Tensor:
    """Content of ``m`` + style of ``n`` -> decode -> re-encode; compare both factors."""
    out = decode_graph(store, h_c_m, h_s_n)
    return nn.mse_loss(content_graph(store, out), h_c_m) + loss_gram(h_s_n, style_graph(store, out))


def training_losses(store: ParamStore, x, rng: np.random.Generator, pair: np.ndarray,
                    weights=(0.01, 0.5, 1.0)) -> dict:
    """All loss terms for a batch ``x``; clip ``b`` borrows its style from ``pair[b]``."""
    x = nn.as_tensor(x)
    h_c = content_graph(store, x)
    h_s = style_graph(store, x)
    out = decode_graph(store, h_c, h_s)
    rec = loss_reconstruction(x[:, :-ROUTE_DIM, :], out[:, :-ROUTE_DIM, :])
    rte = loss_route(x[:, -ROUTE_DIM:, :], out[:, -ROUTE_DIM:, :])
    cst = loss_style_consistency(h_s, rng)
    trn = loss_transfer(store, h_c, h_s[pair])
    total = loss_total(rec, cst, rte, trn, weights)
    return {"total": total, "rec": rec, "cst": cst, "rte": rte, "trn": trn}


# ---------------------------------------------------------------------------
# clip <-> feature conversion

def raw_features(clip: MotionClip, topo: SkeletonTopology):
    """Canonical-frame features ``(M, C_in)`` and the transform that produced them."""
    tf = canonical_transform(clip.positions[0], topo)
    pos = tf.apply(clip.positions)
    rel = pos.copy()
    rel[..., 0] -= pos[:, topo.root, None, 0]
    rel[..., 2] -= pos[:, topo.root, None, 2]
    route = extract_route(MotionSequence(pos, clip.seq.fps), topo)
    return np.concatenate([rel.reshape(len(pos), -1), route], axis=1), tf


def features_to_positions(raw: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Inverse of the feature layout: root ground track from the route block."""
    J = topo.joint_count
    pose = raw[:, :3 * J].reshape(len(raw), J, 3).copy()
    root_xz = raw[:, 3 * J:3 * J + 2]
    pose[:, topo.root, 0] = 0.0
    pose[:, topo.root, 2] = 0.0
    pose[..., 0] += root_xz[:, None, 0]
    pose[..., 2] += root_xz[:, None, 1]
    return reproject(pose, topo)


# ---------------------------------------------------------------------------
# estimator

class StyleTransferAutoencoder(BaseEstimator, TransformerMixin):
    """Trainable content/style auto-encoder over fixed-length clips.

    ``fit`` takes a list of ``MotionClip``; ``transform`` returns per-frame
    ``[content, style]`` features ``(n, M, C_ctn + C_sty)``.
    """

    def __init__(self, topology: Optional[SkeletonTopology] = None, content_channels: int = 16,
                 style_channels: int = 16, fused_channels: int = 64, hidden_channels: int = 32,
                 epochs: int = 200, batch_size: int = 8, learning_rate: float = 5e-4,
                 lr_decay: float = 0.97, weight_decay: float = 1e-5, consistency_weight: float = 0.01,
                 route_weight: float = 0.5, transfer_weight: float = 1.0, random_state: int = 0):
        self.topology = topology
        self.content_channels = content_channels
        self.style_channels = style_channels
        self.fused_channels = fused_channels
        self.hidden_channels = hidden_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.weight_decay = weight_decay
        self.consistency_weight = consistency_weight
        self.route_weight = route_weight
        self.transfer_weight = transfer_weight
        self.random_state = random_state

    # -- setup ---------------------------------------------------------------
    def _dims(self, joints: int) -> Dims:
        return Dims(joints, self.content_channels, self.style_channels, self.fused_channels, self.hidden_channels)

    def _adam(self) -> nn.AdamConfig:
        return nn.AdamConfig(self.learning_rate, self.lr_decay, self.weight_decay)

    @property
    def weights(self) -> tuple:
        return (self.consistency_weight, self.route_weight, self.transfer_weight)

    def initialize(self, clips: Sequence[MotionClip]) -> "StyleTransferAutoencoder":
        """Fit feature statistics and draw fresh weights without training."""
        if self.topology is None:
            raise ValueError("a skeleton topology is required")
        topo = self.topology
        self.clip_length_ = check_clips(clips, topo)
        raw = np.stack([raw_features(c, topo)[0] for c in clips])
        self.scaler_ = StandardScaler().fit(raw.reshape(-1, raw.shape[-1]))
        self.dims_ = self._dims(topo.joint_count)
        self.store_ = init_params(self.dims_, np.random.default_rng(self.random_state))
        self.history_ = []
        return self

    def fit(self, clips: Sequence[MotionClip], y=None) -> "StyleTransferAutoencoder":
        self.initialize(clips)
        return self.partial_fit(clips, epochs=self.epochs)

    def partial_fit(self, clips: Sequence[MotionClip], y=None, epochs: int = 1) -> "StyleTransferAutoencoder":
        """Continue training for ``epochs`` epochs from the current state."""
        if not hasattr(self, "store_"):
            self.initialize(clips)
        x = self.encode_inputs(clips)
        cfg = self._adam()
        store = self.store_
        n = len(x)
        for _ in range(epochs):
            # each epoch has its own stream, so stopping and resuming is seamless
            rng = np.random.default_rng([self.random_state, store.epoch])
            order = rng.permutation(n)
            sums = np.zeros(len(LOSS_NAMES))
            batches = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                pair = np.roll(np.arange(len(idx)), 1)
                store.zero_grad()
                losses = training_losses(store, x[idx], rng, pair, self.weights)
                values = np.array([losses[k].item() for k in LOSS_NAMES])
                if not np.all(np.isfinite(values)):
                    parts = ", ".join(f"{k}={v:.4g}" for k, v in zip(LOSS_NAMES, values))
                    raise NonFiniteLoss(f"epoch {store.epoch} batch {batches}: {parts}")
                losses["total"].backward()
                nn.adam_step(store, cfg)
                sums += values
                batches += 1
            self.history_.append(sums / max(batches, 1))
            store.end_epoch()
        return self

    # -- inference -------------------------------------------------------------
    def encode_inputs(self, clips: Sequence[MotionClip]) -> np.ndarray:
        """Standardized channel-first inputs ``(n, C_in, M)``."""
        check_is_fitted(self, "store_")
        check_clips(clips, self.topology)
        raw = np.stack([raw_features(c, self.topology)[0] for c in clips])
        z = self.scaler_.transform(raw.reshape(-1, raw.shape[-1])).reshape(raw.shape)
        return np.ascontiguousarray(z.transpose(0, 2, 1))

    def encode_content(self, clips) -> np.ndarray:
        with nn.no_grad():
            return content_graph(self.store_, self.encode_inputs(clips)).data

    def encode_style(self, clips) -> np.ndarray:
        with nn.no_grad():
            return style_graph(self.store_, self.encode_inputs(clips)).data

    def transform(self, clips) -> np.ndarray:
        x = self.encode_inputs(clips)
        with nn.no_grad():
            h = nn.concat([content_graph(self.store_, x), style_graph(self.store_, x)], axis=1).data
        return h.transpose(0, 2, 1)

    def fuse_decode(self, content: np.ndarray, style: np.ndarray) -> np.ndarray:
        """Decoded standardized features ``(n, C_in, M)`` from channel-first factors."""
        with nn.no_grad():
            return decode_graph(self.store_, content, style).data

    def decode_clip(self, z: np.ndarray, like: MotionClip) -> MotionClip:
        """Turn decoded features back into a bone-consistent clip in ``like``'s frame."""
        topo = self.topology
        raw = self.scaler_.inverse_transform(z.T)
        pos = features_to_positions(raw, topo)
        tf = canonical_transform(like.positions[0], topo)
        return make_clip(MotionSequence(tf.invert(pos), like.seq.fps), topo, like.source)

    def transfer(self, content_clips: Sequence[MotionClip], style_clips: Sequence[MotionClip]) -> list:
        z = self.fuse_decode(self.encode_content(content_clips), self.encode_style(style_clips))
        return [self.decode_clip(zi, c) for zi, c in zip(z, content_clips)]

    def reconstruct(self, clips: Sequence[MotionClip]) -> list:
        return self.transfer(clips, clips)

    def losses(self, clips: Sequence[MotionClip], seed: int = 0) -> dict:
        """Loss terms on ``clips`` (pairs by rolling one place) without updating."""
        x = self.encode_inputs(clips)
        with nn.no_grad():
            out = training_losses(self.store_, x, np.random.default_rng(seed),
                                  np.roll(np.arange(len(x)), 1), self.weights)
        return {k: v.item() for k, v in out.items()}

    def style_temporal_std(self, clips: Sequence[MotionClip]) -> float:
        """Mean over clips and channels of the style features' standard deviation in time."""
        return float(self.encode_style(clips).std(axis=2).mean())

    # -- persistence -----------------------------------------------------------
    def save(self, path) -> None:
        check_is_fitted(self, "store_")
        d = self.dims_
        meta = {
            "kind": np.array([1.0]),
            "dims": np.array([d.joints, d.content, d.style, d.fused, d.hidden, self.clip_length_], dtype=float),
            "train": np.array([self.epochs, self.batch_size, self.learning_rate, self.lr_decay,
                               self.weight_decay, *self.weights, self.random_state], dtype=float),
            "scaler_mean": self.scaler_.mean_, "scaler_scale": self.scaler_.scale_,
            "history": np.array(self.history_).reshape(-1, len(LOSS_NAMES)),
            **topology_meta(self.topology),
        }
        nn.save_checkpoint(path, self.store_, meta)

    @classmethod
    def load(cls, path) -> "StyleTransferAutoencoder":
        _, meta, _, _ = nn.read_checkpoint(path)
        if "dims" not in meta or meta.get("kind", [0])[0] != 1.0:
            raise CheckpointMismatch(f"{path}: not a short-range checkpoint")
        j, c, s, f, h, m = (int(v) for v in meta["dims"])
        ep, bs, lr, decay, wd, w_cst, w_rte, w_trn, seed = meta["train"]
        model = cls(topology_from_meta(meta), c, s, f, h, int(ep), int(bs), lr, decay, wd,
                    w_cst, w_rte, w_trn, int(seed))
        model.dims_ = model._dims(j)
        model.clip_length_ = m
        model.store_ = init_params(model.dims_, np.random.default_rng(0))
        nn.load_into(path, model.store_)
        scaler = StandardScaler()
        scaler.mean_, scaler.scale_ = meta["scaler_mean"], meta["scaler_scale"]
        scaler.var_ = scaler.scale_ ** 2
        scaler.n_features_in_ = len(scaler.mean_)
        scaler.n_samples_seen_ = 1
        model.scaler_ = scaler
        model.history_ = [row for row in meta["history"]]
        return model

    def check_topology(self, topo: SkeletonTopology) -> None:
        check_topology_matches(self.topology, topo, "short-range model")


def transfer_style(model: StyleTransferAutoencoder, content_clip: MotionClip, style_clip: MotionClip) -> MotionClip:
    """Content of one clip rendered in the style of another."""
    return model.transfer([content_clip], [style_clip])[0]
