"""Skeleton topology, joint-position motion, direction vectors and forward kinematics.

Conventions: Y is up, the ground plane is X-Z and 2D ground points are ``(x, z)``.
Rotations about the vertical axis are counter-clockwise in the ``(x, z)`` chart,
so a quarter turn maps ``(1, 0)`` to ``(0, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FootJointsUndeclared, ParseError, SkeletonMismatch, ZeroBone

ROOT = -1
BONE_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SkeletonTopology:
    """Child-to-parent joint tree with fixed bone lengths.

    ``parent[j]`` is ``-1`` for the single root joint. ``bone_length[j]`` is the
    distance from joint ``j`` to its parent and is ignored at the root.
    ``feet`` optionally names the (left, right) end-effector joints.
    """

    parent: np.ndarray
    bone_length: np.ndarray
    feet: Optional[tuple[int, int]] = None
    root: int = field(init=False)
    order: np.ndarray = field(init=False, repr=False)
    non_root: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=int)
        bone = np.asarray(self.bone_length, dtype=float)
        if parent.ndim != 1 or parent.shape != bone.shape or parent.size == 0:
            raise ValueError("parent and bone_length must be 1-D arrays of equal non-zero length")
        roots = np.flatnonzero(parent == ROOT)
        if roots.size != 1:
            raise ValueError(f"expected exactly one root, found {roots.size}")
        J = parent.size
        if np.any((parent < ROOT) | (parent >= J)):
            raise ValueError("parent index out of range")
        root = int(roots[0])
        children = [[] for _ in range(J)]
        for j, p in enumerate(parent):
            if p != ROOT:
                children[p].append(j)
        order = [root]
        for j in order:
            order.extend(children[j])
        if len(order) != J:
            raise ValueError("parent links do not form a tree")
        non_root = np.array([j for j in range(J) if j != root], dtype=int)
        if np.any(bone[non_root] <= 0) or not np.all(np.isfinite(bone[non_root])):
            raise ValueError("bone lengths must be positive for every non-root joint")
        if self.feet is not None:
            left, right = (int(f) for f in self.feet)
            if not (0 <= left < J and 0 <= right < J):
                raise ValueError("foot joint index out of range")
            object.__setattr__(self, "feet", (left, right))
        for name, value in (("parent", parent), ("bone_length", bone), ("root", root),
                            ("order", np.array(order, dtype=int)), ("non_root", non_root)):
            object.__setattr__(self, name, value)
        parent.setflags(write=False)
        bone.setflags(write=False)

    @property
    def joint_count(self) -> int:
        return int(self.parent.size)

    def require_feet(self) -> tuple[int, int]:
        if self.feet is None:
            raise FootJointsUndeclared("skeleton does not declare foot joints")
        return self.feet

    def hip_joints(self) -> tuple[int, int]:
        """Children of the root on the paths to the left and right feet."""
        hips = []
        for foot in self.require_feet():
            j = foot
            while self.parent[j] != self.root:
                if self.parent[j] == ROOT:
                    break
                j = self.parent[j]
            hips.append(int(j))
        return hips[0], hips[1]

    def ancestor_matrix(self) -> np.ndarray:
        """``A[j, k] = 1`` when non-root joint ``non_root[k]`` lies on the root->j path.

        Joint positions are then ``root + A @ (bone * dirs)``.
        """
        J = self.joint_count
        col = {int(j): k for k, j in enumerate(self.non_root)}
        A = np.zeros((J, J - 1))
        for j in range(J):
            k = j
            while k != self.root:
                A[j, col[k]] = 1.0
                k = self.parent[k]
        return A

    def bone_lengths_of(self, positions: np.ndarray) -> np.ndarray:
        """Measured bone lengths of ``positions`` (``(..., J, 3)``) for non-root joints."""
        positions = np.asarray(positions, dtype=float)
        diff = positions[..., self.non_root, :] - positions[..., self.parent[self.non_root], :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class MotionSequence:
    """Time-ordered joint positions, ``positions`` of shape ``(T, J, 3)`` in meters."""

    positions: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[-1] != 3 or pos.shape[0] < 1:
            raise ValueError(f"positions must have shape (T>=1, J, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]

    @property
    def frames(self) -> list[np.ndarray]:
        return list(self.positions)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return MotionSequence(self.positions[item], self.fps)
        return self.positions[item]


@dataclass(frozen=True)
class DirectionFrame:
    """Unit parent->child vectors for every non-root joint plus the root position.

    ``dirs`` has shape ``(..., J-1, 3)`` ordered like ``SkeletonTopology.non_root``;
    a leading time axis is allowed.
    """

    dirs: np.ndarray
    root_position: np.ndarray


def direction_vectors(state: np.ndarray, topo: SkeletonTopology) -> DirectionFrame:
    """Unit direction of every bone, parent to child. Works on ``(J, 3)`` or ``(T, J, 3)``."""
    state = np.asarray(state, dtype=float)
    if state.shape[-2] != topo.joint_count:
        raise SkeletonMismatch(f"state has {state.shape[-2]} joints, skeleton has {topo.joint_count}")
    diff = state[..., topo.non_root, :] - state[..., topo.parent[topo.non_root], :]
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ZeroBone("a child joint coincides with its parent")
    return DirectionFrame(diff / norm, state[..., topo.root, :].copy())


def forward_kinematics(frame: DirectionFrame, topo: SkeletonTopology) -> np.ndarray:
    """Place joints from the root outward: ``child = parent + bone_length * dir``."""
    dirs = np.asarray(frame.dirs, dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    root = np.asarray(frame.root_position, dtype=float)
    lead = dirs.shape[:-2]
    out = np.empty(lead + (topo.joint_count, 3))
    out[..., topo.root, :] = root
    slot = np.empty(topo.joint_count, dtype=int)
    slot[topo.non_root] = np.arange(topo.non_root.size)
    for j in topo.order[1:]:
        out[..., j, :] = out[..., topo.parent[j], :] + topo.bone_length[j] * dirs[..., slot[j], :]
    return out


def rotation_about_vertical(angle: float) -> np.ndarray:
    """3x3 matrix rotating ``(x, z)`` counter-clockwise in the ground chart; Y fixed."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotate_about_vertical(seq: MotionSequence, angle: float, pivot=(0.0, 0.0)) -> MotionSequence:
    return MotionSequence(rotate_positions(seq.positions, angle, pivot), seq.fps)


def rotate_positions(positions: np.ndarray, angle: float, pivot=(0.0, 0.0)) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    px, pz = pivot
    center = np.array([px, 0.0, pz])
    return (positions - center) @ rotation_about_vertical(angle).T + center


def translate(seq: MotionSequence, offset) -> MotionSequence:
    offset = np.asarray(offset, dtype=float).reshape(3)
    return MotionSequence(seq.positions + offset, seq.fps)


def ground(point) -> np.ndarray:
    """Project a 3D point (or array of points) to ``(x, z)``."""
    point = np.asarray(point, dtype=float)
    return point[..., [0, 2]]


def facing_angle(state: np.ndarray, topo: SkeletonTopology) -> float:
    """Heading of a pose in the ground chart, inferred from the hip axis.

    Forward is the left-minus-right hip vector turned a quarter counter-clockwise.
    """
    left, right = topo.hip_joints()
    lateral = ground(state[left] - state[right])
    if np.linalg.norm(lateral) < 1e-12:
        return 0.0
    forward = np.array([-lateral[1], lateral[0]])
    return float(np.arctan2(forward[1], forward[0]))


@dataclass
class BoneReport:
    deviations: np.ndarray
    flagged: list[int]

    @property
    def ok(self) -> bool:
        return not self.flagged

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max()) if self.deviations.size else 0.0


def validate_state(state: np.ndarray, topo: SkeletonTopology, tol: float = BONE_TOLERANCE) -> BoneReport:
    """Per non-root joint |measured bone - skeleton bone|; joints over ``tol`` are flagged."""
    state = np.asarray(state, dtype=float)
    measured = topo.bone_lengths_of(state)
    dev = np.abs(measured - topo.bone_length[topo.non_root])
    flagged = [int(j) for j, d in zip(topo.non_root, dev) if d > tol]
    return BoneReport(dev, flagged)


# ---------------------------------------------------------------------------
# text formats

def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def save_skeleton(topo: SkeletonTopology, path) -> None:
    lines = [str(topo.joint_count)]
    for j in range(topo.joint_count):
        bone = 0.0 if j == topo.root else topo.bone_length[j]
        lines.append(f"{j} {int(topo.parent[j])} {format(float(bone), '.17g')}")
    if topo.feet is not None:
        lines.append(f"feet {topo.feet[0]} {topo.feet[1]}")
    Path(path).write_text("\n".join(lines) + "\n")


def _rows(path):
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if raw.strip():
            yield lineno, raw.split()


def load_skeleton(path) -> SkeletonTopology:
    rows = list(_rows(path))
    if not rows:
        raise ParseError(path, 1, "empty skeleton file")
    lineno, head = rows[0]
    try:
        J = int(head[0])
    except (ValueError, IndexError):
        raise ParseError(path, lineno, "expected joint count") from None
    if len(head) != 1 or J < 1:
        raise ParseError(path, lineno, "expected a single positive joint count")
    if len(rows) < J + 1:
        raise ParseError(path, rows[-1][0], f"expected {J} joint lines")
    parent = np.full(J, ROOT)
    bone = np.zeros(J)
    seen = set()
    for lineno, tok in rows[1:J + 1]:
        try:
            if len(tok) != 3:
                raise ValueError
            j, p, b = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise ParseError(path, lineno, "expected 'joint_index parent_index bone_length'") from None
        if not 0 <= j < J or j in seen:
            raise ParseError(path, lineno, f"bad joint index {j}")
        seen.add(j)
        parent[j], bone[j] = p, b
    feet = None
    for lineno, tok in rows[J + 1:]:
        if tok[0] == "feet" and len(tok) == 3:
            try:
                feet = (int(tok[1]), int(tok[2]))
            except ValueError:
                raise ParseError(path, lineno, "bad feet line") from None
        else:
            raise ParseError(path, lineno, f"unexpected content {' '.join(tok)!r}")
    try:
        return SkeletonTopology(parent, bone, feet)
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from None


def save_motion(seq: MotionSequence, path) -> None:
    T, J, _ = seq.positions.shape
    lines = [f"{J} {T} {format(seq.fps, '.17g')}"]
    lines.extend(_fmt(frame.ravel()) for frame in seq.positions)
    Path(path).write_text("\n".join(lines) + "\n")


def load_motion(path, topo: Optional[SkeletonTopology] = None) -> MotionSequence:
    rows = list(_rows(path))
    if not rows:
        raise ParseError(path, 1, "empty motion file")
    lineno, head = rows[0]
    try:
        if len(head) != 3:
            raise ValueError
        J, T, fps = int(head[0]), int(head[1]), float(head[2])
    except ValueError:
        raise ParseError(path, lineno, "expected header 'J T fps'") from None
    if J < 1 or T < 1 or not fps > 0:
        raise ParseError(path, lineno, "header values out of range")
    if topo is not None and J != topo.joint_count:
        raise SkeletonMismatch(f"{path}: motion has {J} joints, skeleton has {topo.joint_count}")
    if len(rows) != T + 1:
        raise ParseError(path, rows[-1][0], f"expected {T} frame lines, found {len(rows) - 1}")
    data = np.empty((T, 3 * J))
    for t, (lineno, tok) in enumerate(rows[1:]):
        if len(tok) != 3 * J:
            raise ParseError(path, lineno, f"expected {3 * J} values, found {len(tok)}")
        try:
            data[t] = [float(v) for v in tok]
        except ValueError:
            raise ParseError(path, lineno, "non-numeric value") from None
        if not np.all(np.isfinite(data[t])):
            raise ParseError(path, lineno, "non-finite value")
    return MotionSequence(data.reshape(T, J, 3), fps)


def stack_states(states: Sequence[np.ndarray], fps: float = 30.0) -> MotionSequence:
    return MotionSequence(np.stack([np.asarray(s, dtype=float) for s in states]), fps)


@dataclass(frozen=True)
class GroundTransform:
    """Translate a ground point to the origin, then turn about the vertical."""

    angle: float
    origin: tuple

    def apply(self, positions: np.ndarray) -> np.ndarray:
        ox, oz = self.origin
        return rotate_positions(np.asarray(positions, dtype=float) - np.array([ox, 0.0, oz]), self.angle)

    def invert(self, positions: np.ndarray) -> np.ndarray:
        ox, oz = self.origin
        return rotate_positions(positions, -self.angle) + np.array([ox, 0.0, oz])

    def apply_dirs(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=float) @ rotation_about_vertical(self.angle).T

    def invert_dirs(self, dirs: np.ndarray) -> np.ndarray:
        return np.asarray(dirs, dtype=float) @ rotation_about_vertical(-self.angle).T


def canonical_transform(state: np.ndarray, topo: SkeletonTopology) -> GroundTransform:
    """Transform placing ``state``'s root over the origin, facing +z (chart angle pi/2)."""
    state = np.asarray(state, dtype=float)
    root = ground(state[topo.root])
    return GroundTransform(float(np.pi / 2 - facing_angle(state, topo)), (float(root[0]), float(root[1])))


def reproject(positions: np.ndarray, topo: SkeletonTopology) -> np.ndarray:
    """Nearest bone-consistent pose along each measured bone direction.

    Keeps the root and every bone's direction, restores the skeleton's bone
    lengths through FK. A collapsed bone falls back to pointing straight down.
    """
    positions = np.asarray(positions, dtype=float)
    kids = topo.non_root
    diff = positions[..., kids, :] - positions[..., topo.parent[kids], :]
    length = np.linalg.norm(diff, axis=-1, keepdims=True)
    down = np.broadcast_to([0.0, -1.0, 0.0], diff.shape)
    dirs = np.where(length > 1e-12, diff / np.maximum(length, 1e-300), down)
    return forward_kinematics(DirectionFrame(dirs, positions[..., topo.root, :]), topo)
