"""Loading, windowing and splitting motion data, plus deterministic synthetic walkers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, SkeletonMismatch
from .skeleton import (
    DirectionFrame, MotionSequence, SkeletonTopology, forward_kinematics, ground, load_motion,
    load_skeleton, rotation_about_vertical, save_motion, save_skeleton,
)

ROUTE_DIM = 16
CLIP_LENGTH = 120
TRANSITION_LENGTH = 40


@dataclass(frozen=True)
class MotionClip:
    """An ``M``-frame window with its moving-route control signal.

    ``route`` columns: root (x, z), root velocity (x, z), left foot xyz, right
    foot xyz, left foot velocity xyz, right foot velocity xyz.
    """

    seq: MotionSequence
    route: np.ndarray
    travel_distance: float
    source: tuple = ()

    def __len__(self):
        return len(self.seq)

    @property
    def positions(self) -> np.ndarray:
        return self.seq.positions


class ClipList(list):
    """List of clips that also remembers how many sequences were too short."""

    skipped: int = 0


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    heldout: list
    seed: int


def backward_velocity(x: np.ndarray) -> np.ndarray:
    """Per-frame backward difference along axis 0; zero at the first frame."""
    v = np.zeros_like(x)
    v[1:] = x[1:] - x[:-1]
    return v


def extract_route(seq: MotionSequence, topo: SkeletonTopology) -> np.ndarray:
    left, right = topo.require_feet()
    pos = seq.positions
    root = ground(pos[:, topo.root])
    feet = np.concatenate([pos[:, left], pos[:, right]], axis=1)
    return np.concatenate([root, backward_velocity(root), feet, backward_velocity(feet)], axis=1)


def travel_distance(seq: MotionSequence, topo: SkeletonTopology) -> float:
    root = ground(seq.positions[:, topo.root])
    return float(np.linalg.norm(root[-1] - root[0]))


def make_clip(seq: MotionSequence, topo: SkeletonTopology, source: tuple = ()) -> MotionClip:
    return MotionClip(seq, extract_route(seq, topo), travel_distance(seq, topo), source)


def window_clips(seqs: Sequence[MotionSequence], topo: SkeletonTopology, M: int = CLIP_LENGTH,
                 stride: Optional[int] = None) -> ClipList:
    """Sliding windows of ``M`` frames (default stride ``M // 2``).

    ``source`` of each clip is ``(sequence index, first frame)``; sequences
    shorter than ``M`` are counted in ``.skipped``.
    """
    if M < 2:
        raise ValueError("window length must be at least 2")
    stride = M // 2 if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be positive")
    clips = ClipList()
    for i, seq in enumerate(seqs):
        if len(seq) < M:
            clips.skipped += 1
            continue
        for start in range(0, len(seq) - M + 1, stride):
            clips.append(make_clip(seq[start:start + M], topo, (i, start)))
    return clips


def split(clips: Sequence, heldout_fraction: float, seed: int) -> DatasetSplit:
    """Hold out ``floor(fraction * n)`` clips chosen by a seeded permutation."""
    if not 0.0 <= heldout_fraction <= 1.0:
        raise ValueError("heldout_fraction must lie in [0, 1]")
    n = len(clips)
    k = int(math.floor(heldout_fraction * n))
    chosen = set(np.random.default_rng(seed).permutation(n)[:k].tolist())
    train = [c for i, c in enumerate(clips) if i not in chosen]
    heldout = [c for i, c in enumerate(clips) if i in chosen]
    return DatasetSplit(train, heldout, seed)


# ---------------------------------------------------------------------------
# directory layout: <dir>/skeleton.skel and <dir>/*.mseq

def load_sequences(directory, topo: Optional[SkeletonTopology] = None) -> list:
    directory = Path(directory)
    if topo is None and (directory / "skeleton.skel").exists():
        topo = load_skeleton(directory / "skeleton.skel")
    seqs = []
    J = None if topo is None else topo.joint_count
    for path in sorted(directory.glob("*.mseq")):
        seq = load_motion(path, topo)
        if J is None:
            J = seq.joint_count
        elif seq.joint_count != J:
            raise SkeletonMismatch(f"{path}: {seq.joint_count} joints, expected {J}")
        seqs.append(seq)
    return seqs


def load_dataset(directory) -> tuple[SkeletonTopology, list]:
    directory = Path(directory)
    skel = directory / "skeleton.skel"
    if not skel.exists():
        raise ParseError(skel, 0, "missing skeleton file")
    topo = load_skeleton(skel)
    return topo, load_sequences(directory, topo)


def save_dataset(directory, topo: SkeletonTopology, seqs: Sequence[MotionSequence], prefix: str = "seq") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_skeleton(topo, directory / "skeleton.skel")
    width = max(3, len(str(len(seqs))))
    for i, seq in enumerate(seqs):
        save_motion(seq, directory / f"{prefix}{i:0{width}d}.mseq")


# ---------------------------------------------------------------------------
# synthetic walkers

@dataclass(frozen=True)
class SynthSpec:
    walkers: int = 8
    frames: int = 300
    styles: int = 2
    seed: int = 7

    @classmethod
    def parse(cls, text: str, path="<spec>") -> "SynthSpec":
        tok = text.split()
        if len(tok) != 8 or tok[0::2] != ["walkers", "frames", "styles", "seed"]:
            raise ParseError(path, 1, "expected 'walkers K frames T styles S seed X'")
        try:
            K, T, S, X = (int(v) for v in tok[1::2])
        except ValueError:
            raise ParseError(path, 1, "spec values must be integers") from None
        if K < 1 or T < 2 or S < 1:
            raise ParseError(path, 1, "walkers, styles must be >= 1 and frames >= 2")
        return cls(K, T, S, X)

    def format(self) -> str:
        return f"walkers {self.walkers} frames {self.frames} styles {self.styles} seed {self.seed}\n"


# joint layout of the synthetic skeleton, character facing +z with its left at +x
_JOINTS = [
    ("pelvis", -1, 0.0), ("l_hip", 0, 0.1), ("l_knee", 1, 0.45), ("l_foot", 2, 0.42),
    ("r_hip", 0, 0.1), ("r_knee", 4, 0.45), ("r_foot", 5, 0.42),
    ("spine", 0, 0.25), ("chest", 7, 0.25), ("neck", 8, 0.1), ("head", 9, 0.15),
    ("l_shoulder", 8, 0.18), ("l_elbow", 11, 0.28), ("l_hand", 12, 0.25),
    ("r_shoulder", 8, 0.18), ("r_elbow", 14, 0.28), ("r_hand", 15, 0.25),
]
JOINT_NAMES = [name for name, _, _ in _JOINTS]
PELVIS_HEIGHT = 0.9


def synthetic_skeleton() -> SkeletonTopology:
    return SkeletonTopology([p for _, p, _ in _JOINTS], [b for _, _, b in _JOINTS],
                            feet=(JOINT_NAMES.index("l_foot"), JOINT_NAMES.index("r_foot")))


@dataclass(frozen=True)
class WalkerParams:
    """Content of one walker: gait frequency (Hz), swing amplitude (rad), speed
    (m/s), path curvature (rad/m), gait phase, initial heading and position."""

    frequency: float
    amplitude: float
    speed: float
    curvature: float = 0.0
    phase: float = 0.0
    heading: float = 0.0
    start: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class WalkerStyle:
    """Constant posture offsets: forward torso lean and sideways arm lift (rad)."""

    lean: float = 0.0
    arm_lift: float = 0.0


def _rotx(v, a):
    c, s = np.cos(a), np.sin(a)
    return np.stack([v[..., 0], v[..., 1] * c - v[..., 2] * s, v[..., 1] * s + v[..., 2] * c], axis=-1)


def _limb(theta):
    """Downward unit vector swung forward (toward +z) by ``theta``."""
    return np.stack([np.zeros_like(theta), -np.cos(theta), np.sin(theta)], axis=-1)


def root_path(p: WalkerParams, frames: int, fps: float = 30.0) -> tuple[np.ndarray, np.ndarray]:
    """Ground positions ``(T, 2)`` and heading angles ``(T,)`` of a constant-curvature path."""
    s = p.speed * np.arange(frames) / fps
    heading = p.heading + p.curvature * s
    if abs(p.curvature) < 1e-12:
        offset = s[:, None] * np.array([np.cos(p.heading), np.sin(p.heading)])
    else:
        k = p.curvature
        offset = np.stack([np.sin(heading) - np.sin(p.heading), np.cos(p.heading) - np.cos(heading)], axis=1) / k
    return np.asarray(p.start, dtype=float) + offset, heading


def walker_motion(p: WalkerParams, style: WalkerStyle, frames: int, fps: float = 30.0) -> MotionSequence:
    """Joint positions of a parametric walker; every frame comes out of FK."""
    topo = synthetic_skeleton()
    t = np.arange(frames) / fps
    phi = 2 * np.pi * p.frequency * t + p.phase
    A = p.amplitude
    T = frames
    names = {n: i for i, n in enumerate(JOINT_NAMES)}
    local = np.zeros((T, topo.joint_count, 3))
    up = np.broadcast_to([0.0, 1.0, 0.0], (T, 3))
    lean_dir = _rotx(up, style.lean)
    for side, sign, offset in (("l", 1.0, 0.0), ("r", -1.0, np.pi)):
        swing = A * np.sin(phi + offset)
        flex = 0.8 * A * np.maximum(0.0, np.sin(phi + offset + np.pi / 2))
        local[:, names[f"{side}_hip"]] = [sign, 0.0, 0.0]
        local[:, names[f"{side}_knee"]] = _limb(swing)
        local[:, names[f"{side}_foot"]] = _limb(swing - flex)
        arm_swing = -0.6 * A * np.sin(phi + offset)
        lifted = np.array([sign * np.sin(style.arm_lift), -np.cos(style.arm_lift), 0.0])
        upper = _rotx(np.broadcast_to(lifted, (T, 3)), -arm_swing)
        fore = _rotx(np.broadcast_to(lifted, (T, 3)), -(arm_swing + 0.5 * A * (1 + np.sin(phi + offset))))
        shoulder = np.array([sign, 0.2, 0.0]) / np.hypot(1.0, 0.2)
        local[:, names[f"{side}_shoulder"]] = _rotx(np.broadcast_to(shoulder, (T, 3)), style.lean)
        local[:, names[f"{side}_elbow"]] = upper
        local[:, names[f"{side}_hand"]] = fore
    for joint in ("spine", "chest", "neck", "head"):
        local[:, names[joint]] = lean_dir
    ground_xy, heading = root_path(p, frames, fps)
    world = np.empty_like(local)
    for i in range(T):
        # local forward (+z) sits at chart angle pi/2
        world[i] = local[i] @ rotation_about_vertical(heading[i] - np.pi / 2).T
    height = PELVIS_HEIGHT + 0.05 * A * np.cos(2 * phi)
    root = np.stack([ground_xy[:, 0], height, ground_xy[:, 1]], axis=1)
    dirs = world[:, topo.non_root]
    return MotionSequence(forward_kinematics(DirectionFrame(dirs, root), topo), fps)


def style_schedule(styles: int) -> list:
    """Styles spread between 'arms lifted, upright' and 'leaning, arms down'."""
    out = []
    for i in range(styles):
        a = i / max(styles - 1, 1)
        out.append(WalkerStyle(lean=0.4 * a, arm_lift=1.2 * (1 - a)))
    return out


def walker_params(walkers: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    params = []
    for k in range(walkers):
        curvature = 0.0 if k % 2 == 0 else rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 0.15)
        params.append(WalkerParams(
            frequency=rng.uniform(0.8, 1.3), amplitude=rng.uniform(0.25, 0.6),
            speed=rng.uniform(0.8, 1.5), curvature=float(curvature),
            phase=rng.uniform(0, 2 * np.pi), heading=rng.uniform(-np.pi, np.pi),
            start=tuple(rng.uniform(-2, 2, size=2))))
    return params


def synth_dataset(spec: SynthSpec, seed: Optional[int] = None) -> tuple[SkeletonTopology, list]:
    """``walkers * styles`` sequences ordered walker-major: index ``k * styles + s``."""
    seed = spec.seed if seed is None else seed
    styles = style_schedule(spec.styles)
    seqs = [walker_motion(p, st, spec.frames) for p in walker_params(spec.walkers, seed) for st in styles]
    return synthetic_skeleton(), seqs
