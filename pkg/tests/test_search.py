import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionsynth.dataset import WalkerParams, WalkerStyle, make_clip, synthetic_skeleton, walker_motion
from motionsynth.errors import EmptyDatabase, NoMatch, PlanInfeasible
from motionsynth.search import (
    align_clip, build_index, match_clip, match_clip_widening, sample_subgoals,
)


def test_index_bounds():
    idx = build_index([1.0, 2.0, 3.0])
    assert (idx.d_min, idx.d_max) == (1.0, 3.0)
    single = build_index([2.5])
    assert single.d_min == single.d_max == 2.5
    with pytest.raises(EmptyDatabase):
        build_index([])


def test_single_segment_plan():
    idx = build_index([1.0, 3.0])
    plan = sample_subgoals([0, 0], [2, 0], 1, idx, np.random.default_rng(0))
    assert plan.points.shape == (2, 2)
    assert plan.segment_dists[0] == pytest.approx(2.0, abs=1e-12)
    assert np.all(plan.start_offset == 0) and np.all(plan.end_offset == 0)
    far = sample_subgoals([0, 0], [10, 0], 1, idx, np.random.default_rng(0))
    assert far.segment_dists[0] == pytest.approx(3.0 - 0.02)
    assert far.start_offset[0] == pytest.approx(-far.end_offset[0])


def goal_at(span, angle):
    return span * np.array([np.cos(angle), np.sin(angle)])


def test_segments_in_range_over_many_plans():
    idx = build_index(np.linspace(1.5, 4.0, 20))
    mean = 0.5 * (idx.d_min + idx.d_max)
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        L = int(rng.integers(1, 6))
        p_E = goal_at(rng.uniform(0.5, 1.5) * L * mean, rng.uniform(-np.pi, np.pi))
        plan = sample_subgoals([0, 0], p_E, L, idx, rng)
        assert plan.points.shape == (L + 1, 2)
        assert np.all(plan.segment_dists >= idx.d_min) and np.all(plan.segment_dists <= idx.d_max)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.floats(0.5, 3.0), st.floats(-np.pi, np.pi), st.integers(0, 2 ** 31))
def test_plan_geometry(L, scale, angle, seed):
    idx = build_index([1.0, 2.0, 2.5])
    ex, ez = np.array([0.5, -1]) + goal_at(scale * L * 1.75, angle)
    plan = sample_subgoals([0.5, -1], [ex, ez], L, idx, np.random.default_rng(seed))
    seg = np.diff(plan.points, axis=0)
    assert np.allclose(np.linalg.norm(seg, axis=1), plan.segment_dists, atol=1e-9)
    assert np.allclose(np.linalg.norm(plan.headings, axis=1), 1.0)
    assert abs(plan.segment_dists.sum() - np.linalg.norm(seg, axis=1).sum()) < 1e-9
    assert np.allclose(plan.points[-1], np.array([ex, ez]) + plan.end_offset, atol=1e-9)
    assert np.allclose(plan.points[0], np.array([0.5, -1]) + plan.start_offset, atol=1e-12)


def test_headings_turn_less_than_quarter():
    idx = build_index([1.0, 2.0])
    rng = np.random.default_rng(8)
    for _ in range(500):
        plan = sample_subgoals([0, 0], goal_at(rng.uniform(3, 9), rng.uniform(-np.pi, np.pi)), 4, idx, rng)
        cos = np.sum(plan.headings[1:] * plan.headings[:-1], axis=1)
        assert np.all(cos >= -1e-12)


def test_plan_determinism():
    idx = build_index([1.0, 2.0, 3.0])
    a = sample_subgoals([0, 0], [6, 2], 3, idx, np.random.default_rng(5))
    b = sample_subgoals([0, 0], [6, 2], 3, idx, np.random.default_rng(5))
    assert a.points.tobytes() == b.points.tobytes()


def test_infeasible_plan():
    # fixed unit segments can never turn back to the start within a quarter turn
    with pytest.raises(PlanInfeasible):
        sample_subgoals([0, 0], [0, 0], 3, build_index([1.0]), np.random.default_rng(0))


def test_match_band_semantics():
    idx = build_index([1.0, 2.0, 3.0])
    rng = np.random.default_rng(0)
    assert match_clip(2.03, idx, rng) == 1
    with pytest.raises(NoMatch):
        match_clip(2.0, idx, rng)


def test_match_uniform_over_band():
    idx = build_index([1.97, 1.99, 3.0])
    rng = np.random.default_rng(11)
    picks = np.array([match_clip(2.0, idx, rng) for _ in range(10_000)])
    assert abs(np.mean(picks == 0) - 0.5) < 0.05
    assert set(picks.tolist()) == {0, 1}


def test_widening():
    idx = build_index([1.0, 1.7])
    cid, sigma = match_clip_widening(1.9, idx, np.random.default_rng(0))
    assert cid == 1 and sigma == pytest.approx(0.4)
    with pytest.raises(PlanInfeasible):
        match_clip_widening(5.0, idx, np.random.default_rng(0))


def walk_clip(heading=0.7):
    topo = synthetic_skeleton()
    seq = walker_motion(WalkerParams(1.0, 0.4, 1.1, 0.1, heading=heading, start=(2.0, -1.0)), WalkerStyle(), 120)
    return topo, make_clip(seq, topo)


def displacement(clip, topo):
    r = clip.positions[:, topo.root][:, [0, 2]]
    return r[-1] - r[0]


def test_align_identity_and_reverse():
    topo, clip = walk_clip()
    d = displacement(clip, topo)
    same = align_clip(clip, [0, 0], d, topo)
    assert same.rotation == pytest.approx(0.0, abs=1e-12)
    flipped = align_clip(clip, [0, 0], -d, topo)
    assert flipped.rotation == pytest.approx(np.pi, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-5, 5), st.floats(-5, 5))
def test_align_matches_heading(angle, sx, sz):
    topo, clip = walk_clip()
    heading = np.array([np.cos(angle), np.sin(angle)])
    out = align_clip(clip, [sx, sz], heading, topo, clip_id=4)
    d = displacement(out.clip, topo)
    assert d @ heading >= 0.999 * np.linalg.norm(d)
    cross = d[0] * heading[1] - d[1] * heading[0]
    assert abs(np.arctan2(cross, d @ heading)) < 1e-6
    assert np.allclose(out.clip.positions[0, topo.root][[0, 2]], [sx, sz], atol=1e-9)
    lengths = topo.bone_lengths_of(out.clip.positions)
    assert np.max(np.abs(lengths - topo.bone_length[topo.non_root])) < 1e-9
    assert out.clip_id == 4 and out.clip.travel_distance == pytest.approx(clip.travel_distance, abs=1e-9)
