"""Transition generation between two poses.

Two LSTMs roll out per-joint (gamma, lambda) coordinates from opposite ends of
the gap, each relative to the slerp bases spanned by the boundary poses. Both
rollouts are turned into positions by the differentiable slerp synthesis and
forward kinematics, then a small per-frame head fuses them. A least-squares
discriminator over short windows of direction frames supplies the adversarial
signal.

Every transition is solved in the canonical frame of its first pose (root over
the origin, facing +z) and mapped back afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from . import nn
from .errors import CheckpointMismatch, EmptyEval, NonFiniteLoss
from .nn import ParamStore, Tensor
from .skeleton import (
    MotionSequence, SkeletonTopology, canonical_transform, direction_vectors, facing_angle,
    rotation_about_vertical,
)
from .slerp import ANTIPARALLEL, LAMBDA_CAP, PARALLEL, REGULAR, JointBases, make_bases
from .validation import check_topology_matches, topology_from_meta, topology_meta

TRANSITION_LENGTH = 40
# raw head outputs are scaled into metres per frame / direction corrections
VELOCITY_SCALE = 0.05
CORRECTION_SCALE = 0.1
# smallest per-feature scale used to standardize critic inputs (unit-vector components)
CRITIC_SCALE_FLOOR = 0.05


# ---------------------------------------------------------------------------
# boundary problems

@dataclass(frozen=True)
class TransitionBatch:
    """Boundary pairs in their canonical frames, plus optional ground truth interiors."""

    start: np.ndarray          # (B, J, 3)
    end: np.ndarray            # (B, J, 3)
    bases: JointBases          # arrays (B, J-1, ...)
    cond: np.ndarray           # (B, 6(J-1) + 3)
    length: int
    target: Optional[np.ndarray] = None    # (B, N-2, J, 3)
    transforms: tuple = ()

    @property
    def size(self) -> int:
        return len(self.start)

    @property
    def joints(self) -> int:
        return self.start.shape[1]


def prepare(starts, ends, length: int, topo: SkeletonTopology, interiors=None) -> TransitionBatch:
    """Canonicalize boundary pairs (and interiors) and build their slerp bases."""
    if length < 3:
        raise ValueError("transition length must be at least 3")
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    tfs = tuple(canonical_transform(s, topo) for s in starts)
    s = np.stack([tf.apply(p) for tf, p in zip(tfs, starts)])
    e = np.stack([tf.apply(p) for tf, p in zip(tfs, ends)])
    d1 = direction_vectors(s, topo).dirs
    dN = direction_vectors(e, topo).dirs
    root = topo.root
    cond = np.concatenate([d1.reshape(len(s), -1), dN.reshape(len(s), -1), e[:, root] - s[:, root]], axis=1)
    target = None
    if interiors is not None:
        target = np.stack([tf.apply(p) for tf, p in zip(tfs, np.asarray(interiors, dtype=float))])
        if target.shape[1] != length - 2:
            raise ValueError(f"interiors must have {length - 2} frames")
    return TransitionBatch(s, e, make_bases(d1, dN), cond, length, target, tfs)


def boundary_params(batch: TransitionBatch) -> tuple[np.ndarray, np.ndarray]:
    """``o1`` and ``oN``: (gamma, lambda) of the boundary poses in their own bases.

    Laid out as ``[gamma_1..gamma_K, lambda_1..lambda_K]``; by construction the
    start sits at (0, 0) and the end at (0, 1) for every regular joint.
    """
    B, K = batch.bases.omega.shape
    regular = batch.bases.kind == REGULAR
    o1 = np.zeros((B, 2 * K))
    oN = np.concatenate([np.zeros((B, K)), regular.astype(float)], axis=1)
    return o1, oN


# ---------------------------------------------------------------------------
# differentiable geometry

def synthesize_tensor(bases: JointBases, gamma, lam) -> Tensor:
    """Tensor form of the batched slerp synthesis.

    ``gamma``/``lam`` are ``(B, T, K)``; bases are ``(B, K)`` constants. Returns
    unit directions ``(B, T, K, 3)``. Degenerate joints follow the same
    fallbacks as the numpy version.
    """
    gamma, lam = nn.as_tensor(gamma), nn.as_tensor(lam)
    kind = bases.kind[:, None, :]
    regular = kind == REGULAR
    om = bases.omega[:, None, :]
    sin_om = np.where(regular, np.sin(om), 1.0)
    v1 = bases.v1[:, None]
    vN = bases.vN[:, None]
    n_hat = bases.n_hat[:, None]

    def col(t):
        return nn.reshape(t, t.shape + (1,))

    a = nn.sin((1.0 - lam) * om) / sin_om
    b = nn.sin(lam * om) / sin_om
    u = col(a) * v1 + col(b) * vN
    par = kind == PARALLEL
    if par.any():
        lin = col(1.0 - lam) * v1 + col(lam) * vN
        lin = nn.where(par[..., None], lin, np.broadcast_to(v1, lin.shape))
        u = nn.where(par[..., None], nn.normalize(lin), u)
    anti = kind == ANTIPARALLEL
    if anti.any():
        turn = col(nn.cos(lam * np.pi)) * v1 + col(nn.sin(lam * np.pi)) * n_hat
        u = nn.where(anti[..., None], turn, u)
    g = gamma * regular.astype(float) * LAMBDA_CAP
    return col(nn.cos(g)) * u + col(nn.sin(g)) * n_hat


def fk_tensor(dirs, root, topo: SkeletonTopology) -> Tensor:
    """Positions ``(..., J, 3)`` from directions ``(..., J-1, 3)`` and roots ``(..., 3)``."""
    scaled = nn.as_tensor(dirs) * topo.bone_length[topo.non_root][:, None]
    offsets = nn.matmul(topo.ancestor_matrix(), scaled)
    root = nn.as_tensor(root)
    return offsets + nn.reshape(root, root.shape[:-1] + (1, 3))


def _cumsum_matrix(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n)))


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class GenDims:
    joints: int
    hidden: int
    fuse_hidden: int

    @property
    def k(self) -> int:
        return self.joints - 1

    @property
    def step_in(self) -> int:
        # previous output, goal, both boundary direction frames, root gap, time channel
        return 2 * self.k + 2 * self.k + 6 * self.k + 3 + 1

    @property
    def head_out(self) -> int:
        return 2 * self.k


@dataclass(frozen=True)
class DiscDims:
    joints: int
    window: int
    width: int
    blocks: int

    @property
    def n_in(self) -> int:
        return self.window * (self.joints - 1) * 3


def init_generator(dims: GenDims, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    for side in ("fwd", "bwd"):
        nn.init_lstm(store, f"{side}.lstm", dims.step_in, dims.hidden, rng)
        nn.init_dense(store, f"{side}.head", dims.hidden, dims.head_out, rng)
        # no bias: a constant velocity is removed by the endpoint correction anyway
        store.add(f"{side}.vel.w", nn.xavier_uniform(rng, (dims.hidden, 2), dims.hidden, 2))
    J = dims.joints
    nn.init_dense(store, "fse.0", 6 * J + 1, dims.fuse_hidden, rng)
    nn.init_dense(store, "fse.1", dims.fuse_hidden, 3 * dims.k + 3, rng)
    return store


def init_discriminator(dims: DiscDims, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    nn.init_dense(store, "disc.in", dims.n_in, dims.width, rng)
    for k in range(dims.blocks):
        nn.init_dense(store, f"disc.res{k}.0", dims.width, dims.width, rng)
        nn.init_dense(store, f"disc.res{k}.1", dims.width, dims.width, rng)
    nn.init_dense(store, "disc.out", dims.width, 1, rng)
    return store


def _dense(store, name, x):
    return nn.dense(x, store[f"{name}.w"], store[f"{name}.b"])


# ---------------------------------------------------------------------------
# generator graph

def anchored_params(raw_gamma, raw_lam, frame_tau: float):
    """Squash raw head outputs around the slerp baseline at transition time ``frame_tau``.

    ``lambda = sigmoid(logit(tau) + b * raw)`` and ``gamma = b * tanh(raw)`` with
    ``b = 4 tau (1 - tau)``: mid-transition the full ranges are reachable, while
    frames next to either boundary stay next to the boundary pose.
    """
    bump = 4.0 * frame_tau * (1.0 - frame_tau)
    logit = float(np.log(frame_tau / (1.0 - frame_tau)))
    return nn.tanh(raw_gamma) * bump, nn.sigmoid(raw_lam * bump + logit)


def rollout(store: ParamStore, side: str, first: np.ndarray, goal: np.ndarray, cond: np.ndarray,
            steps: int, hidden: int, reverse: bool = False):
    """Autoregressive rollout of ``steps`` frames; returns (gamma, lambda, velocity) tensors.

    Shapes are ``(B, steps, K)``, ``(B, steps, K)`` and ``(B, steps, 2)`` in the
    rollout's own step order. ``reverse`` marks a rollout whose step ``k``
    describes frame ``steps - k`` of the full transition (0-based).
    """
    B, K2 = first.shape
    K = K2 // 2
    h = nn.Tensor(np.zeros((B, hidden)))
    c = nn.Tensor(np.zeros((B, hidden)))
    prev = nn.Tensor(first)
    wx, wh, b = (store[f"{side}.lstm.{p}"] for p in ("wx", "wh", "b"))
    gammas, lams, vels = [], [], []
    for k in range(steps):
        tau = np.full((B, 1), (k + 1) / (steps + 1))
        x = nn.concat([prev, goal, cond, tau], axis=1)
        h, c = nn.lstm_cell(x, h, c, wx, wh, b)
        raw = _dense(store, f"{side}.head", h)
        frame_tau = (steps - k if reverse else k + 1) / (steps + 1)
        g, lam = anchored_params(raw[:, :K], raw[:, K:2 * K], frame_tau)
        gammas.append(g)
        lams.append(lam)
        vels.append(nn.matmul(h, store[f"{side}.vel.w"]) * VELOCITY_SCALE)
        prev = nn.concat([g, lam], axis=1)
    return nn.stack(gammas, axis=1), nn.stack(lams, axis=1), nn.stack(vels, axis=1)


def rollout_forward(store, batch: TransitionBatch, hidden: int):
    o1, oN = boundary_params(batch)
    return rollout(store, "fwd", o1, oN, batch.cond, batch.length - 2, hidden)


def rollout_backward(store, batch: TransitionBatch, hidden: int):
    """Backward rollout in its own order: step ``k`` describes frame ``N - 2 - k`` (0-based)."""
    o1, oN = boundary_params(batch)
    return rollout(store, "bwd", oN, o1, batch.cond, batch.length - 2, hidden, reverse=True)


def root_tracks(batch: TransitionBatch, vel_f, vel_b, topo: SkeletonTopology):
    """Integrated root tracks ``(B, N-2, 3)`` from both rollouts, in time order.

    Each ground track is corrected linearly so that, extrapolated one more
    step, it lands exactly on the far boundary root. Height is interpolated
    linearly between the boundary roots.
    """
    N = batch.length
    n = N - 2
    L = _cumsum_matrix(n)
    r1 = batch.start[:, topo.root][:, [0, 2]]
    rN = batch.end[:, topo.root][:, [0, 2]]
    t = np.arange(1, N - 1)[None, :, None]
    cum_f = nn.matmul(L, vel_f)
    end_f = cum_f[:, -1, :] + vel_f[:, -1, :]
    miss_f = nn.reshape(rN - r1 - end_f, (len(r1), 1, 2))
    track_f = r1[:, None] + cum_f + miss_f * (t / (N - 1))
    # backward steps walk from the end toward the start
    cum_b = nn.matmul(L, vel_b)
    start_b = cum_b[:, -1, :] + vel_b[:, -1, :]
    miss_b = nn.reshape(r1 - rN + start_b, (len(r1), 1, 2))
    track_b_steps = rN[:, None] - cum_b + miss_b * (t / (N - 1))
    track_b = track_b_steps[:, ::-1, :]
    y1 = batch.start[:, topo.root, 1][:, None]
    yN = batch.end[:, topo.root, 1][:, None]
    frac = np.arange(1, N - 1)[None, :] / (N - 1)
    height = (y1 + (yN - y1) * frac)[..., None]

    def with_height(track):
        return nn.concat([track[..., :1], np.broadcast_to(height, track.shape[:-1] + (1,)), track[..., 1:]], axis=-1)

    return with_height(track_f), with_height(track_b)


@dataclass
class GeneratorOutput:
    positions: Tensor        # fused interior (B, N-2, J, 3)
    dirs: Tensor             # fused directions (B, N-2, K, 3)
    forward_positions: Tensor
    backward_positions: Tensor
    forward_params: tuple
    backward_params: tuple


def generate_graph(store: ParamStore, batch: TransitionBatch, topo: SkeletonTopology, hidden: int) -> GeneratorOutput:
    """Full generator: both rollouts, synthesis, FK, fusion, FK again."""
    N = batch.length
    g_f, l_f, v_f = rollout_forward(store, batch, hidden)
    g_b, l_b, v_b = rollout_backward(store, batch, hidden)
    # put the backward rollout into time order so frame t pairs with frame t
    g_b, l_b = g_b[:, ::-1, :], l_b[:, ::-1, :]
    root_f, root_b = root_tracks(batch, v_f, v_b, topo)
    dirs_f = synthesize_tensor(batch.bases, g_f, l_f)
    dirs_b = synthesize_tensor(batch.bases, g_b, l_b)
    pos_f = fk_tensor(dirs_f, root_f, topo)
    pos_b = fk_tensor(dirs_b, root_b, topo)
    fused_dirs, fused_root = fuse(store, pos_f, pos_b, dirs_f, dirs_b, root_f, root_b, N)
    positions = fk_tensor(fused_dirs, fused_root, topo)
    return GeneratorOutput(positions, fused_dirs, pos_f, pos_b, (g_f, l_f, v_f), (g_b, l_b, v_b))


def fuse(store, pos_f, pos_b, dirs_f, dirs_b, root_f, root_b, N: int):
    """Per-frame fusion head over a time-weighted blend of the two rollouts.

    Each rollout is trusted near its own anchor: weight ``1 - tau`` on the
    forward pass and ``tau`` on the backward one. Learned corrections fade to
    zero at both ends so frames next to the boundaries stay close to them.
    """
    B, T, J, _ = pos_f.shape
    K = J - 1
    tau = np.broadcast_to((np.arange(1, N - 1) / (N - 1))[None, :, None], (B, T, 1))
    x = nn.concat([nn.reshape(pos_f, (B, T, 3 * J)), nn.reshape(pos_b, (B, T, 3 * J)), tau], axis=-1)
    out = _dense(store, "fse.1", nn.leaky_relu(_dense(store, "fse.0", x))) * CORRECTION_SCALE
    bump = 4.0 * tau * (1.0 - tau)
    corr = nn.reshape(out[..., :3 * K] * bump, (B, T, K, 3))
    w = tau[..., None]
    dirs = nn.normalize(dirs_f * (1.0 - w) + dirs_b * w + corr)
    root = root_f * (1.0 - tau) + root_b * tau + out[..., 3 * K:] * bump
    return dirs, root


# ---------------------------------------------------------------------------
# discriminator and losses

def discriminate_graph(store: ParamStore, windows, blocks: int) -> Tensor:
    """Probability ``(B,)`` that each flattened window is real."""
    h = nn.leaky_relu(_dense(store, "disc.in", windows))
    for k in range(blocks):
        h = h + _dense(store, f"disc.res{k}.1", nn.leaky_relu(_dense(store, f"disc.res{k}.0", h)))
    return nn.reshape(nn.sigmoid(_dense(store, "disc.out", h)), (-1,))


def loss_position(target, predicted) -> Tensor:
    """Mean-square position error (the generator objective scales it to a per-frame norm)."""
    return nn.mse_loss(predicted, target)


def loss_adversarial(d_real, d_fake) -> tuple[Tensor, Tensor]:
    """Least-squares pair ``(L_D, L_G)``, averaged over the batch."""
    d_real, d_fake = nn.as_tensor(d_real), nn.as_tensor(d_fake)
    one_minus_real = 1.0 - d_real
    one_minus_fake = 1.0 - d_fake
    l_d = ((one_minus_real * one_minus_real).mean() + (d_fake * d_fake).mean()) * 0.5
    l_g = (one_minus_fake * one_minus_fake).mean()
    return l_d, l_g


def window_rotations(positions: np.ndarray, starts: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Per-sample matrices turning the window's first frame to face +z."""
    return np.stack([rotation_about_vertical(np.pi / 2 - facing_angle(p[s], topo))
                     for p, s in zip(positions, starts)])


def take_windows(dirs, positions: np.ndarray, starts: np.ndarray, width: int, topo: SkeletonTopology) -> Tensor:
    """Flattened, heading-normalized direction windows ``(B, width * K * 3)``.

    ``dirs`` may be a tensor (gradients flow); the turning angle is treated as
    a constant computed from ``positions``.
    """
    dirs = nn.as_tensor(dirs)
    B = dirs.shape[0]
    idx = starts[:, None] + np.arange(width)[None, :]
    rows = np.arange(B)[:, None]
    win = dirs[rows, idx]
    rot = window_rotations(positions, starts, topo)
    turned = nn.matmul(win, np.swapaxes(rot, -1, -2)[:, None])
    return nn.reshape(turned, (B, -1))


# ---------------------------------------------------------------------------
# estimator

def supervised_windows(clips: Sequence, length: int, stride: int) -> list:
    """Same-sequence transition problems: ``(positions (N, J, 3), source)`` slices of clips."""
    out = []
    for c in clips:
        pos = c.positions
        for s in range(0, len(pos) - length + 1, stride):
            out.append(pos[s:s + length])
    return out


class TransitionGenerator(BaseEstimator):
    """Bidirectional transition model; ``fit`` on clips, ``predict`` transitions."""

    def __init__(self, topology: Optional[SkeletonTopology] = None, transition_length: int = TRANSITION_LENGTH,
                 hidden_size: int = 64, fuse_hidden: int = 64, disc_width: int = 128, disc_blocks: int = 3,
                 disc_window: int = 8, epochs: int = 200, batch_size: int = 16, window_stride: int = 20,
                 learning_rate: float = 5e-4, lr_decay: float = 0.97, weight_decay: float = 1e-5,
                 adversarial_weight: float = 0.01, random_state: int = 0):
        self.topology = topology
        self.transition_length = transition_length
        self.hidden_size = hidden_size
        self.fuse_hidden = fuse_hidden
        self.disc_width = disc_width
        self.disc_blocks = disc_blocks
        self.disc_window = disc_window
        self.epochs = epochs
        self.batch_size = batch_size
        self.window_stride = window_stride
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.weight_decay = weight_decay
        self.adversarial_weight = adversarial_weight
        self.random_state = random_state

    def _dims(self):
        J = self.topology.joint_count
        return (GenDims(J, self.hidden_size, self.fuse_hidden),
                DiscDims(J, min(self.disc_window, self.transition_length - 2), self.disc_width, self.disc_blocks))

    def _adam(self) -> nn.AdamConfig:
        return nn.AdamConfig(self.learning_rate, self.lr_decay, self.weight_decay)

    def initialize(self) -> "TransitionGenerator":
        if self.topology is None:
            raise ValueError("a skeleton topology is required")
        if self.transition_length < 3:
            raise ValueError("transition length must be at least 3")
        self.topology.require_feet()
        self.gen_dims_, self.disc_dims_ = self._dims()
        rng = np.random.default_rng(self.random_state)
        self.gen_ = init_generator(self.gen_dims_, rng)
        self.disc_ = init_discriminator(self.disc_dims_, rng)
        self.history_ = []
        self.disc_scaler_ = None
        return self

    def fit(self, clips: Sequence, y=None) -> "TransitionGenerator":
        self.initialize()
        return self.partial_fit(clips, epochs=self.epochs)

    # -- training --------------------------------------------------------------
    def _pools(self, clips):
        N = self.transition_length
        windows = supervised_windows(clips, N, self.window_stride)
        if not windows:
            raise ValueError(f"no clip is long enough for {N}-frame transitions")
        root = self.topology.root
        disp = [np.linalg.norm(w[-1, root, [0, 2]] - w[0, root, [0, 2]]) for w in windows]
        return np.stack(windows), (float(min(disp)), float(max(disp)))

    def cross_pairs(self, clips, count: int, rng: np.random.Generator, span: tuple) -> tuple:
        """Boundary pairs from different clips, both facing +z, end placed ahead by a seen distance."""
        topo = self.topology
        starts, ends = [], []
        n = len(clips)
        for _ in range(count):
            a = int(rng.integers(n))
            b = int(rng.integers(n - 1)) if n > 1 else 0
            b = b + 1 if n > 1 and b >= a else b
            s = clips[a].positions[rng.integers(len(clips[a]))]
            e = clips[b].positions[rng.integers(len(clips[b]))]
            s = canonical_transform(s, topo).apply(s)
            e = canonical_transform(e, topo).apply(e)
            e = e + np.array([0.0, 0.0, rng.uniform(*span)])
            starts.append(s)
            ends.append(e)
        return np.stack(starts), np.stack(ends)

    def _fit_disc_scaler(self, windows: np.ndarray) -> None:
        """Standardize critic inputs with statistics of real windows (first call only)."""
        if self.disc_scaler_ is not None:
            return
        topo = self.topology
        W = self.disc_dims_.window
        interior = windows[:, 1:-1]
        dirs = direction_vectors(interior, topo).dirs
        feats = []
        for s in range(0, interior.shape[1] - W + 1, max(1, W // 2)):
            starts = np.full(len(interior), s)
            feats.append(take_windows(dirs, interior, starts, W, topo).data)
        scaler = StandardScaler().fit(np.concatenate(feats))
        # near-rigid channels (e.g. hips) barely vary in real data; keep their scale sane
        scaler.scale_ = np.maximum(scaler.scale_, CRITIC_SCALE_FLOOR)
        self.disc_scaler_ = scaler

    def _disc_input(self, windows):
        return (windows - self.disc_scaler_.mean_) / self.disc_scaler_.scale_

    def _fake_windows(self, out: GeneratorOutput, rng) -> Tensor:
        B, T = out.dirs.shape[:2]
        W = self.disc_dims_.window
        starts = rng.integers(0, T - W + 1, size=B)
        return take_windows(out.dirs, out.positions.data, starts, W, self.topology)

    def _real_windows(self, batch: TransitionBatch, rng) -> np.ndarray:
        topo = self.topology
        full = batch.target
        B, T = full.shape[:2]
        W = self.disc_dims_.window
        starts = rng.integers(0, T - W + 1, size=B)
        dirs = direction_vectors(full, topo).dirs
        return take_windows(dirs, full, starts, W, topo).data

    def partial_fit(self, clips: Sequence, y=None, epochs: int = 1, update_generator: bool = True) -> "TransitionGenerator":
        """Train for ``epochs`` more epochs; ``update_generator=False`` trains only the critic."""
        if not hasattr(self, "gen_"):
            self.initialize()
        topo = self.topology
        clips = list(clips)
        windows, span = self._pools(clips)
        self._fit_disc_scaler(windows)
        cfg = self._adam()
        H = self.hidden_size
        N = self.transition_length
        w_adv = self.adversarial_weight
        frame_coords = 3 * topo.joint_count
        n = len(windows)
        for _ in range(epochs):
            epoch = self.gen_.epoch if update_generator else self.disc_.epoch
            rng = np.random.default_rng([self.random_state, epoch, int(update_generator)])
            order = rng.permutation(n)
            sums = np.zeros(4)
            batches = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                sup = prepare(windows[idx, 0], windows[idx, -1], N, topo, windows[idx, 1:-1])
                cs, ce = self.cross_pairs(clips, len(idx), rng, span)
                cross = prepare(cs, ce, N, topo)
                real = self._real_windows(sup, rng)
                # generator step: L_pos + w * L_G
                self.gen_.zero_grad()
                if update_generator:
                    out = generate_graph(self.gen_, sup, topo, H)
                    l_pos = loss_position(sup.target, out.positions)
                    fake_out = generate_graph(self.gen_, cross, topo, H)
                    d_fake = discriminate_graph(self.disc_, self._disc_input(self._fake_windows(fake_out, rng)),
                                                self.disc_blocks)
                    _, l_g = loss_adversarial(np.ones(1), d_fake)
                    # per-frame squared norm = mean-square times coordinates per frame
                    total = l_pos * frame_coords + l_g * w_adv
                    self._check(total, l_pos, l_g)
                    total.backward()
                    nn.adam_step(self.gen_, cfg)
                    fake_dirs, fake_pos = fake_out.dirs.data, fake_out.positions.data
                else:
                    with nn.no_grad():
                        fake_out = generate_graph(self.gen_, cross, topo, H)
                        l_pos = loss_position(sup.target, generate_graph(self.gen_, sup, topo, H).positions)
                    fake_dirs, fake_pos = fake_out.dirs.data, fake_out.positions.data
                    l_g = None
                # discriminator step on detached fakes: w * L_D
                Wn = self.disc_dims_.window
                fstarts = rng.integers(0, fake_dirs.shape[1] - Wn + 1, size=len(fake_dirs))
                fake = take_windows(fake_dirs, fake_pos, fstarts, Wn, topo).data
                self.disc_.zero_grad()
                d_real = discriminate_graph(self.disc_, self._disc_input(real), self.disc_blocks)
                d_fake = discriminate_graph(self.disc_, self._disc_input(fake), self.disc_blocks)
                l_d, l_g_now = loss_adversarial(d_real, d_fake)
                self._check(l_d, l_d, l_d)
                (l_d * w_adv).backward()
                nn.adam_step(self.disc_, cfg)
                acc = 0.5 * (np.mean(d_real.data > 0.5) + np.mean(d_fake.data < 0.5))
                sums += [l_pos.item(), (l_g if l_g is not None else l_g_now).item(), l_d.item(), acc]
                batches += 1
            self.history_.append(sums / max(batches, 1))
            if update_generator:
                self.gen_.end_epoch()
            self.disc_.end_epoch()
        return self

    @staticmethod
    def _check(total, *parts):
        values = [total.item()] + [p.item() for p in parts]
        if not np.all(np.isfinite(values)):
            raise NonFiniteLoss("non-finite transition loss: " + ", ".join(f"{v:.4g}" for v in values))

    # -- inference ---------------------------------------------------------------
    def predict_interior(self, starts, ends) -> np.ndarray:
        """Generated interiors ``(B, N-2, J, 3)`` in the callers' frames."""
        check_is_fitted(self, "gen_")
        batch = prepare(starts, ends, self.transition_length, self.topology)
        with nn.no_grad():
            out = generate_graph(self.gen_, batch, self.topology, self.hidden_size).positions.data
        return np.stack([tf.invert(p) for tf, p in zip(batch.transforms, out)])

    def predict(self, starts, ends) -> list:
        """Full transitions ``[s1, interior, sN]`` as MotionSequences of length N."""
        starts = np.asarray(starts, dtype=float)
        ends = np.asarray(ends, dtype=float)
        interior = self.predict_interior(starts, ends)
        return [MotionSequence(np.concatenate([s[None], mid, e[None]])) for s, mid, e in zip(starts, interior, ends)]

    def discriminate(self, windows: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            return discriminate_graph(self.disc_, self._disc_input(windows), self.disc_blocks).data

    def check_topology(self, topo: SkeletonTopology) -> None:
        check_topology_matches(self.topology, topo, "transition model")

    # -- persistence -------------------------------------------------------------
    def save(self, path) -> None:
        check_is_fitted(self, "gen_")
        both = ParamStore()
        for store in (self.gen_, self.disc_):
            for name, t in store.items():
                both.params[name] = t
                both.m[name], both.v[name] = store.m[name], store.v[name]
        both.step, both.epoch = self.gen_.step, self.gen_.epoch
        meta = {
            "kind": np.array([2.0]),
            "config": np.array([self.transition_length, self.hidden_size, self.fuse_hidden, self.disc_width,
                                self.disc_blocks, self.disc_window, self.epochs, self.batch_size,
                                self.window_stride, self.learning_rate, self.lr_decay, self.weight_decay,
                                self.adversarial_weight, self.random_state], dtype=float),
            "disc_counters": np.array([self.disc_.step, self.disc_.epoch], dtype=float),
            "history": np.array(self.history_).reshape(-1, 4),
            "disc_mean": self.disc_scaler_.mean_, "disc_scale": self.disc_scaler_.scale_,
            **topology_meta(self.topology),
        }
        nn.save_checkpoint(path, both, meta)

    @classmethod
    def load(cls, path) -> "TransitionGenerator":
        arrays, meta, step, epoch = nn.read_checkpoint(path)
        if meta.get("kind", [0])[0] != 2.0:
            raise CheckpointMismatch(f"{path}: not a transition checkpoint")
        c = meta["config"]
        model = cls(topology_from_meta(meta), int(c[0]), int(c[1]), int(c[2]), int(c[3]), int(c[4]), int(c[5]),
                    int(c[6]), int(c[7]), int(c[8]), float(c[9]), float(c[10]), float(c[11]), float(c[12]), int(c[13]))
        model.initialize()
        for store in (model.gen_, model.disc_):
            for name, t in store.items():
                t.data = arrays[name].copy()
                store.m[name] = arrays[f"{name}.m"].copy()
                store.v[name] = arrays[f"{name}.v"].copy()
        model.gen_.step, model.gen_.epoch = step, epoch
        model.disc_.step, model.disc_.epoch = (int(v) for v in meta["disc_counters"])
        model.history_ = [row for row in meta["history"]]
        scaler = StandardScaler()
        scaler.mean_, scaler.scale_ = meta["disc_mean"], meta["disc_scale"]
        scaler.var_ = scaler.scale_ ** 2
        scaler.n_features_in_ = len(scaler.mean_)
        scaler.n_samples_seen_ = 1
        model.disc_scaler_ = scaler
        return model


def interpolate(model: TransitionGenerator, s1: np.ndarray, sN: np.ndarray) -> MotionSequence:
    """Transition of ``model.transition_length`` frames whose ends are exactly ``s1`` and ``sN``."""
    return model.predict(np.asarray(s1)[None], np.asarray(sN)[None])[0]


def interpolation_mse(predictor, windows: np.ndarray) -> np.ndarray:
    """Per-interior-frame mean squared position error over held-out windows.

    ``predictor`` maps ``(starts, ends)`` to interiors ``(B, N-2, J, 3)``; a
    ``TransitionGenerator`` or any callable works.
    """
    windows = np.asarray(windows, dtype=float)
    if len(windows) == 0:
        raise EmptyEval("no windows to evaluate")
    fn = predictor.predict_interior if hasattr(predictor, "predict_interior") else predictor
    pred = np.asarray(fn(windows[:, 0], windows[:, -1]))
    err = (pred - windows[:, 1:-1]) ** 2
    return err.mean(axis=(0, 2, 3))
