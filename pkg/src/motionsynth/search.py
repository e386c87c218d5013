"""Reference clip search: distance index, sub-goal sampling, matching and alignment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import MotionClip, make_clip
from .errors import EmptyDatabase, NoMatch, PlanInfeasible
from .skeleton import SkeletonTopology, facing_angle, ground, rotate_about_vertical, translate

DEFAULT_SIGMA = 0.05
MAX_ATTEMPTS = 1000
MAX_WIDENINGS = 3
# endpoint distances are pulled this fraction of the range inside [d_min, d_max]
ENDPOINT_MARGIN = 0.01


@dataclass(frozen=True)
class ClipIndex:
    ids: np.ndarray
    distances: np.ndarray

    @property
    def d_min(self) -> float:
        return float(self.distances.min())

    @property
    def d_max(self) -> float:
        return float(self.distances.max())

    @property
    def entries(self) -> list:
        return list(zip(self.ids.tolist(), self.distances.tolist()))

    def __len__(self):
        return len(self.ids)


def build_index(clips: Sequence, ids: Optional[Sequence[int]] = None) -> ClipIndex:
    """Index clips (or raw distances) by travel distance; ids default to positions."""
    if len(clips) == 0:
        raise EmptyDatabase("cannot index an empty clip set")
    d = np.array([c.travel_distance if isinstance(c, MotionClip) else float(c) for c in clips])
    ids = np.arange(len(d)) if ids is None else np.asarray(ids, dtype=int)
    return ClipIndex(ids, d)


@dataclass(frozen=True)
class SubGoalPlan:
    """Ground points ``[p_S, p_1, ..., p_E]`` after endpoint adjustment.

    ``start_offset`` / ``end_offset`` are the 2D translations applied to the
    requested endpoints.
    """

    points: np.ndarray
    segment_dists: np.ndarray
    headings: np.ndarray
    start_offset: np.ndarray
    end_offset: np.ndarray

    @property
    def num_segments(self) -> int:
        return len(self.segment_dists)


def _unit_angle(a: float) -> np.ndarray:
    return np.array([np.cos(a), np.sin(a)])


def _wrap(a: float) -> float:
    return float((a + np.pi) % (2 * np.pi) - np.pi)


def _make_plan(points, start_offset, end_offset) -> SubGoalPlan:
    points = np.asarray(points, dtype=float)
    seg = np.diff(points, axis=0)
    dists = np.linalg.norm(seg, axis=1)
    return SubGoalPlan(points, dists, seg / dists[:, None], np.asarray(start_offset, float), np.asarray(end_offset, float))


def sample_subgoals(p_S, p_E, L: int, index: ClipIndex, rng: np.random.Generator,
                    max_attempts: int = MAX_ATTEMPTS) -> SubGoalPlan:
    """Split the route ``p_S -> p_E`` into ``L`` segments with lengths in ``[d_min, d_max]``.

    The first heading points at ``p_E``; each later one turns by ``U(-pi/2, pi/2)``
    from its predecessor. The last segment heads at ``p_E``, which is slid along
    that heading until its length is in range. With ``L == 1`` both endpoints
    slide symmetrically along the single segment.
    """
    if L < 1:
        raise ValueError("need at least one segment")
    p_S = np.asarray(p_S, dtype=float).reshape(2)
    p_E = np.asarray(p_E, dtype=float).reshape(2)
    d_min, d_max = index.d_min, index.d_max
    margin = ENDPOINT_MARGIN * (d_max - d_min)
    lo, hi = d_min + margin, d_max - margin
    gap = p_E - p_S
    dist = float(np.linalg.norm(gap))
    toward = float(np.arctan2(gap[1], gap[0])) if dist > 1e-9 else float(rng.uniform(-np.pi, np.pi))

    if L == 1:
        h = _unit_angle(toward)
        shift = 0.5 * (float(np.clip(dist, lo, hi)) - dist)
        return _make_plan([p_S - shift * h, p_E + shift * h], -shift * h, shift * h)

    for _ in range(max_attempts):
        points = [p_S]
        angle = toward
        for l in range(L - 1):
            if l > 0:
                angle += rng.uniform(-np.pi / 2, np.pi / 2)
            points.append(points[-1] + rng.uniform(lo, hi) * _unit_angle(angle))
        last = p_E - points[-1]
        d_E = float(np.linalg.norm(last))
        if d_E < 1e-9:
            continue
        final = float(np.arctan2(last[1], last[0]))
        if abs(_wrap(final - angle)) > np.pi / 2:
            continue
        h = last / d_E
        end_offset = (float(np.clip(d_E, lo, hi)) - d_E) * h
        points.append(p_E + end_offset)
        return _make_plan(points, np.zeros(2), end_offset)
    raise PlanInfeasible(f"no valid {L}-segment plan in {max_attempts} attempts "
                         f"(d_min={d_min:.4g}, d_max={d_max:.4g}, span={dist:.4g})")


def match_clip(d_l: float, index: ClipIndex, rng: np.random.Generator, sigma: float = DEFAULT_SIGMA) -> int:
    """Uniform pick among clips with ``d_l - sigma < d < d_l``."""
    band = np.flatnonzero((index.distances > d_l - sigma) & (index.distances < d_l))
    if band.size == 0:
        raise NoMatch(f"no clip with distance in ({d_l - sigma:.4g}, {d_l:.4g})")
    return int(index.ids[band[rng.integers(band.size)]])


def match_clip_widening(d_l: float, index: ClipIndex, rng: np.random.Generator,
                        sigma: float = DEFAULT_SIGMA, widenings: int = MAX_WIDENINGS) -> tuple[int, float]:
    """``match_clip`` that doubles ``sigma`` on an empty band; returns (id, sigma used)."""
    for _ in range(widenings + 1):
        try:
            return match_clip(d_l, index, rng, sigma), sigma
        except NoMatch:
            sigma *= 2
    raise PlanInfeasible(f"no clip shorter than {d_l:.4g} within {sigma / 2:.4g}")


@dataclass(frozen=True)
class AlignedClip:
    clip_id: int
    rotation: float
    translation: np.ndarray
    clip: MotionClip


def align_clip(clip: MotionClip, start, heading, topo: SkeletonTopology, clip_id: int = -1) -> AlignedClip:
    """Move the clip's first root to ``start`` and turn its displacement onto ``heading``.

    ``heading`` is a 2D direction in the ground chart. A clip that does not
    travel is turned by its facing instead of its displacement.
    """
    start = np.asarray(start, dtype=float).reshape(2)
    heading = np.asarray(heading, dtype=float).reshape(2)
    root = ground(clip.positions[:, topo.root])
    disp = root[-1] - root[0]
    if np.linalg.norm(disp) > 1e-9:
        own = float(np.arctan2(disp[1], disp[0]))
    else:
        own = facing_angle(clip.positions[0], topo)
    angle = _wrap(float(np.arctan2(heading[1], heading[0])) - own)
    if angle == -np.pi:
        angle = float(np.pi)
    shift = start - root[0]
    offset = np.array([shift[0], 0.0, shift[1]])
    seq = rotate_about_vertical(translate(clip.seq, offset), angle, pivot=start)
    return AlignedClip(clip_id, angle, offset, make_clip(seq, topo, clip.source))
