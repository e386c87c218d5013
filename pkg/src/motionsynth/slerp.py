"""Two-coordinate (gamma, lambda) parameterization of unit directions.

A direction is located relative to two endpoint directions ``v1`` and ``vN``:
``lambda`` slides along the great circle from ``v1`` to ``vN`` ("longitude")
and ``gamma`` tilts out of that plane toward the unit normal ``n_hat``
("latitude"). Both slerps use the same closed form, the outer one with a
fixed quarter-turn angle.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateBasis, ProjectionDegenerate
from .skeleton import DirectionFrame, MotionSequence, SkeletonTopology, direction_vectors, forward_kinematics

LAMBDA_CAP = np.pi / 2
DEGENERATE_EPS = 1e-6

REGULAR, PARALLEL, ANTIPARALLEL = 0, 1, 2


@dataclass(frozen=True)
class SlerpBasis:
    v1: np.ndarray
    vN: np.ndarray
    omega: float
    n_hat: np.ndarray
    lambda_cap: float = LAMBDA_CAP


@dataclass(frozen=True)
class SlerpParams:
    gamma: float
    lam: float

    def __post_init__(self):
        if not -1.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma {self.gamma} outside [-1, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda {self.lam} outside [0, 1]")


def _unit(v, name):
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"{name} must be unit length (|{name}| = {n})")
    return v / n


def make_basis(v1, vN) -> SlerpBasis:
    v1, vN = _unit(v1, "v1"), _unit(vN, "vN")
    cross = np.cross(v1, vN)
    s = np.linalg.norm(cross)
    if s < DEGENERATE_EPS:
        raise DegenerateBasis("endpoint directions are parallel or antiparallel")
    return SlerpBasis(v1, vN, float(np.arctan2(s, v1 @ vN)), cross / s)


def synthesize_direction(basis: SlerpBasis, p: SlerpParams) -> np.ndarray:
    """Inner slerp v1->vN by ``lam``, then outer slerp toward ``n_hat`` by ``gamma``."""
    om = basis.omega
    u = (np.sin((1 - p.lam) * om) * basis.v1 + np.sin(p.lam * om) * basis.vN) / np.sin(om)
    cap = basis.lambda_cap
    return (np.sin((1 - p.gamma) * cap) * u + np.sin(p.gamma * cap) * basis.n_hat) / np.sin(cap)


def recover_params(basis: SlerpBasis, v, strict: bool = False) -> SlerpParams:
    """Inverse of :func:`synthesize_direction` for directions inside the wedge.

    A direction along ``+-n_hat`` has no in-plane component; its longitude is
    reported as 0.5 unless ``strict`` is set, in which case ``ProjectionDegenerate``
    is raised.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    v = v / np.linalg.norm(v)
    gamma = float(np.arcsin(np.clip(v @ basis.n_hat, -1.0, 1.0)) / LAMBDA_CAP)
    inplane = v - (v @ basis.n_hat) * basis.n_hat
    norm = np.linalg.norm(inplane)
    if norm < 1e-9:
        if strict:
            raise ProjectionDegenerate("direction is normal to the endpoint plane")
        return SlerpParams(gamma, 0.5)
    inplane /= norm
    angle = np.arctan2(np.cross(basis.v1, inplane) @ basis.n_hat, basis.v1 @ inplane)
    return SlerpParams(gamma, float(np.clip(angle / basis.omega, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# batched forms over joints (and optionally a leading batch axis)

@dataclass(frozen=True)
class JointBases:
    """Per-joint bases, arrays shaped ``(..., J-1)`` / ``(..., J-1, 3)``.

    ``kind`` marks REGULAR joints and the PARALLEL / ANTIPARALLEL fallbacks.
    For degenerate joints ``omega`` holds 0 or pi and ``n_hat`` is any unit
    vector orthogonal to ``v1``.
    """

    v1: np.ndarray
    vN: np.ndarray
    omega: np.ndarray
    n_hat: np.ndarray
    kind: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.kind != REGULAR


def _orthogonal_unit(v: np.ndarray) -> np.ndarray:
    """Gram-Schmidt of the canonical axis least aligned with each ``v``."""
    axis = np.zeros_like(v)
    idx = np.argmin(np.abs(v), axis=-1)
    np.put_along_axis(axis, idx[..., None], 1.0, axis=-1)
    w = axis - np.sum(axis * v, axis=-1, keepdims=True) * v
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


def make_bases(v1: np.ndarray, vN: np.ndarray) -> JointBases:
    v1 = np.asarray(v1, dtype=float)
    vN = np.asarray(vN, dtype=float)
    v1 = v1 / np.linalg.norm(v1, axis=-1, keepdims=True)
    vN = vN / np.linalg.norm(vN, axis=-1, keepdims=True)
    cross = np.cross(v1, vN)
    s = np.linalg.norm(cross, axis=-1)
    dot = np.sum(v1 * vN, axis=-1)
    degenerate = s < DEGENERATE_EPS
    kind = np.where(degenerate, np.where(dot > 0, PARALLEL, ANTIPARALLEL), REGULAR)
    omega = np.where(degenerate, np.where(dot > 0, 0.0, np.pi), np.arctan2(s, dot))
    safe = np.where(degenerate, 1.0, s)[..., None]
    n_hat = np.where(degenerate[..., None], _orthogonal_unit(v1), cross / safe)
    return JointBases(v1, vN, omega, n_hat, kind.astype(int))


def synthesize_directions(bases: JointBases, gamma: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Vectorized synthesis; ``gamma``/``lam`` broadcast against ``bases.omega``.

    Degenerate joints ignore ``gamma``: parallel endpoints use normalized linear
    interpolation, antiparallel endpoints turn through ``n_hat``.
    """
    gamma = np.asarray(gamma, dtype=float)
    lam = np.asarray(lam, dtype=float)
    om = bases.omega
    kind = bases.kind
    sin_om = np.where(kind == REGULAR, np.sin(om), 1.0)
    a = (np.sin((1 - lam) * om) / sin_om)[..., None]
    b = (np.sin(lam * om) / sin_om)[..., None]
    u = a * bases.v1 + b * bases.vN
    lin = (1 - lam)[..., None] * bases.v1 + lam[..., None] * bases.vN
    lin_norm = np.linalg.norm(lin, axis=-1, keepdims=True)
    nlerp = np.where(lin_norm > 1e-12, lin / np.where(lin_norm > 1e-12, lin_norm, 1.0), bases.v1)
    turn = np.cos(lam * np.pi)[..., None] * bases.v1 + np.sin(lam * np.pi)[..., None] * bases.n_hat
    u = np.where((kind == PARALLEL)[..., None], nlerp, np.where((kind == ANTIPARALLEL)[..., None], turn, u))
    g = np.where(kind == REGULAR, gamma, 0.0)[..., None]
    return np.cos(g * LAMBDA_CAP) * u + np.sin(g * LAMBDA_CAP) * bases.n_hat


def recover_params_batch(bases: JointBases, v: np.ndarray) -> np.ndarray:
    """Vectorized :func:`recover_params`; returns ``(..., 2)`` as (gamma, lambda).

    Degenerate joints report (0, 0).
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    along = np.sum(v * bases.n_hat, axis=-1)
    gamma = np.arcsin(np.clip(along, -1.0, 1.0)) / LAMBDA_CAP
    inplane = v - along[..., None] * bases.n_hat
    norm = np.linalg.norm(inplane, axis=-1)
    inplane = inplane / np.where(norm < 1e-9, 1.0, norm)[..., None]
    sin_part = np.sum(np.cross(bases.v1, inplane) * bases.n_hat, axis=-1)
    cos_part = np.sum(bases.v1 * inplane, axis=-1)
    safe_om = np.where(bases.kind == REGULAR, bases.omega, 1.0)
    lam = np.clip(np.arctan2(sin_part, cos_part) / safe_om, 0.0, 1.0)
    lam = np.where(norm < 1e-9, 0.5, lam)
    deg = bases.kind != REGULAR
    return np.stack([np.where(deg, 0.0, gamma), np.where(deg, 0.0, lam)], axis=-1)


@dataclass(frozen=True)
class ParamTrajectory:
    """``params[t, k] = (gamma, lambda)`` of non-root joint ``k`` at interior frame ``t``.

    ``excluded[k]`` marks joints whose endpoint basis is degenerate; their
    parameters are not meaningful targets.
    """

    params: np.ndarray
    excluded: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.ndim != 3 or p.shape[-1] != 2:
            raise ValueError(f"params must be (N, J-1, 2), got {p.shape}")
        if np.any(np.abs(p[..., 0]) > 1) or np.any((p[..., 1] < 0) | (p[..., 1] > 1)):
            raise ValueError("parameters outside gamma in [-1, 1], lambda in [0, 1]")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "excluded", np.asarray(self.excluded, dtype=bool))

    @property
    def gamma(self) -> np.ndarray:
        return self.params[..., 0]

    @property
    def lam(self) -> np.ndarray:
        return self.params[..., 1]


def motion_to_params(start: DirectionFrame, end: DirectionFrame, interior) -> ParamTrajectory:
    """Express every interior direction frame in the (start, end) bases."""
    bases = make_bases(start.dirs, end.dirs)
    dirs = np.stack([np.asarray(f.dirs if isinstance(f, DirectionFrame) else f) for f in interior]) \
        if len(interior) else np.zeros((0,) + bases.v1.shape)
    return ParamTrajectory(recover_params_batch(bases, dirs), bases.degenerate)


def params_to_motion(start: np.ndarray, end: np.ndarray, traj: ParamTrajectory,
                     root_track: np.ndarray, topo: SkeletonTopology, fps: float = 30.0) -> MotionSequence:
    """Synthesize per-frame directions from the (start, end) bases and run FK."""
    bases = make_bases(direction_vectors(start, topo).dirs, direction_vectors(end, topo).dirs)
    dirs = synthesize_directions(bases, traj.gamma, traj.lam)
    root_track = np.asarray(root_track, dtype=float).reshape(-1, 3)
    return MotionSequence(forward_kinematics(DirectionFrame(dirs, root_track), topo), fps)


def save_trajectory(traj: ParamTrajectory, path) -> None:
    N, K, _ = traj.params.shape
    lines = [f"{N} {K} 2"]
    lines.extend(" ".join(format(float(x), ".17g") for x in row.ravel()) for row in traj.params)
    lines.append("excluded " + " ".join(str(int(e)) for e in traj.excluded))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory(path) -> ParamTrajectory:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    N, K, two = (int(x) for x in lines[0].split())
    if two != 2:
        raise ValueError("trajectory header must end in 2")
    params = np.array([[float(x) for x in ln.split()] for ln in lines[1:N + 1]]).reshape(N, K, 2)
    excluded = np.zeros(K, dtype=bool)
    if len(lines) > N + 1 and lines[N + 1].startswith("excluded"):
        excluded = np.array([bool(int(x)) for x in lines[N + 1].split()[1:]])
    return ParamTrajectory(params, excluded)
