"""Input checks shared by the estimators and the pipeline."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import CheckpointMismatch, ShapeMismatch, SkeletonMismatch
from .skeleton import SkeletonTopology


def check_clips(clips: Sequence, topo: SkeletonTopology, min_count: int = 1) -> int:
    """Validate a clip list against a skeleton; returns the shared clip length."""
    clips = list(clips)
    if len(clips) < min_count:
        raise ValueError(f"need at least {min_count} clip(s), got {len(clips)}")
    lengths = {len(c) for c in clips}
    if len(lengths) != 1:
        raise ShapeMismatch(f"clips must share one length, got {sorted(lengths)}")
    for c in clips:
        if c.seq.joint_count != topo.joint_count:
            raise SkeletonMismatch(f"clip has {c.seq.joint_count} joints, skeleton has {topo.joint_count}")
        if not np.all(np.isfinite(c.positions)):
            raise ValueError("clip contains non-finite positions")
    return lengths.pop()


def check_topology_matches(expected: SkeletonTopology, actual: SkeletonTopology, what: str = "model") -> None:
    if expected.joint_count != actual.joint_count or not np.array_equal(expected.parent, actual.parent):
        raise CheckpointMismatch(f"{what} was trained on a {expected.joint_count}-joint skeleton, "
                                 f"data has {actual.joint_count} joints")


def topology_meta(topo: SkeletonTopology) -> dict:
    left, right = topo.require_feet()
    return {"parent": topo.parent.astype(float), "bone_length": topo.bone_length,
            "feet": np.array([left, right], dtype=float)}


def topology_from_meta(meta: dict) -> SkeletonTopology:
    return SkeletonTopology(meta["parent"].astype(int), meta["bone_length"],
                            tuple(int(f) for f in meta["feet"]))
