import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionsynth.dataset import (
    ROUTE_DIM, SynthSpec, WalkerParams, WalkerStyle, extract_route, load_dataset, load_sequences,
    save_dataset, split, synth_dataset, synthetic_skeleton, travel_distance, walker_motion, window_clips,
)
from motionsynth.errors import FootJointsUndeclared, ParseError
from motionsynth.skeleton import MotionSequence, SkeletonTopology, direction_vectors, stack_states


def straight_walk(frames, speed=1.0, amplitude=0.4, heading=0.3):
    return walker_motion(WalkerParams(1.0, amplitude, speed, heading=heading), WalkerStyle(), frames)


def test_empty_directory_gives_empty_list(tmp_path):
    assert load_sequences(tmp_path) == []


def test_dataset_round_trip_is_text_identical(tmp_path):
    topo, seqs = synth_dataset(SynthSpec(2, 20, 1, 3))
    save_dataset(tmp_path / "a", topo, seqs)
    topo2, back = load_dataset(tmp_path / "a")
    save_dataset(tmp_path / "b", topo2, back)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_text() == (tmp_path / "b" / f.name).read_text()
    assert all(np.array_equal(a.positions, b.positions) for a, b in zip(seqs, back))


def test_malformed_line_names_the_line(tmp_path):
    topo, seqs = synth_dataset(SynthSpec(1, 5, 1, 0))
    save_dataset(tmp_path, topo, seqs)
    path = next(tmp_path.glob("*.mseq"))
    lines = path.read_text().splitlines()
    lines[3] = "1.0 nope 2.0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match=":4:"):
        load_sequences(tmp_path)


def test_window_counts():
    seq = straight_walk(180)
    assert len(window_clips([straight_walk(120)], synthetic_skeleton())) == 1
    clips = window_clips([seq, straight_walk(50)], synthetic_skeleton())
    assert len(clips) == 2 and clips.skipped == 1
    assert [c.source for c in clips] == [(0, 0), (0, 60)]
    assert all(len(c) == 120 and c.route.shape == (120, ROUTE_DIM) for c in clips)


def test_one_metre_per_second_walk_travels_119_gaps():
    clip = window_clips([straight_walk(120, speed=1.0)], synthetic_skeleton())[0]
    assert clip.travel_distance == pytest.approx(119 / 30, abs=1e-9)


def test_route_of_stationary_pose_has_zero_velocity():
    topo = synthetic_skeleton()
    still = stack_states([straight_walk(1).positions[0]] * 10)
    route = extract_route(still, topo)
    assert np.all(route[:, 2:4] == 0) and np.all(route[:, 10:] == 0)


def test_uniform_translation_velocity():
    topo = synthetic_skeleton()
    base = straight_walk(1).positions[0]
    v = np.array([0.03, 0.0, -0.02])
    seq = stack_states([base + i * v for i in range(12)])
    route = extract_route(seq, topo)
    assert np.allclose(route[1:, 2:4], [0.03, -0.02], atol=1e-12)
    assert np.all(route[0, 2:4] == 0)


def test_route_velocity_matches_finite_difference_oracle(rng):
    topo = synthetic_skeleton()
    seq = straight_walk(30, amplitude=0.5)
    route = extract_route(seq, topo)
    p = seq.positions
    for t in range(1, 30):
        assert np.allclose(route[t, 2:4], p[t, 0, [0, 2]] - p[t - 1, 0, [0, 2]], atol=1e-9)
        assert np.allclose(route[t, 10:13], p[t, 3] - p[t - 1, 3], atol=1e-9)
        assert np.allclose(route[t, 13:16], p[t, 6] - p[t - 1, 6], atol=1e-9)
    assert np.array_equal(route[:, 4:7], p[:, 3]) and np.array_equal(route[:, 7:10], p[:, 6])


def test_route_requires_declared_feet():
    topo = SkeletonTopology([-1, 0, 1], [0.0, 1.0, 1.0])
    seq = MotionSequence(np.zeros((2, 3, 3)) + np.array([[0, 0, 0], [0, 1, 0], [0, 2, 0]]))
    with pytest.raises(FootJointsUndeclared):
        extract_route(seq, topo)


def test_split_rules():
    items = list(range(10))
    assert split(items, 0.0, 1).train == items
    a, b = split(items, 0.35, 4), split(items, 0.35, 4)
    assert a.heldout == b.heldout and len(a.heldout) == 3
    assert sorted(a.train + a.heldout) == items and not set(a.train) & set(a.heldout)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 40), st.floats(0, 1), st.integers(0, 10 ** 6))
def test_split_is_a_partition(n, frac, seed):
    s = split(list(range(n)), frac, seed)
    assert len(s.heldout) == int(np.floor(frac * n))
    assert sorted(s.train + s.heldout) == list(range(n))


def test_zero_amplitude_is_rigid_translation():
    topo = synthetic_skeleton()
    seq = straight_walk(40, amplitude=0.0)
    dirs = direction_vectors(seq.positions, topo).dirs
    assert np.allclose(dirs, dirs[0], atol=1e-12)
    offsets = seq.positions - seq.positions[:, :1]
    assert np.allclose(offsets, offsets[0], atol=1e-12)


def test_styles_share_root_tracks():
    topo, seqs = synth_dataset(SynthSpec(3, 60, 3, 11))
    for k in range(3):
        roots = [seqs[k * 3 + s].positions[:, topo.root] for s in range(3)]
        assert all(np.array_equal(roots[0], r) for r in roots[1:])
    assert not np.allclose(seqs[0].positions, seqs[2].positions)


def test_synthetic_bone_lengths_constant():
    topo, seqs = synth_dataset(SynthSpec(4, 90, 2, 5))
    for seq in seqs:
        lengths = topo.bone_lengths_of(seq.positions)
        assert np.max(np.abs(lengths - topo.bone_length[topo.non_root])) < 1e-9


def test_synthesis_is_deterministic():
    a = synth_dataset(SynthSpec(2, 30, 2, 9))[1]
    b = synth_dataset(SynthSpec(2, 30, 2, 0), seed=9)[1]
    assert all(np.array_equal(x.positions, y.positions) for x, y in zip(a, b))


def test_spec_parse():
    spec = SynthSpec.parse("walkers 8 frames 300 styles 2 seed 7")
    assert spec == SynthSpec(8, 300, 2, 7)
    assert SynthSpec.parse(spec.format()) == spec
    with pytest.raises(ParseError):
        SynthSpec.parse("walkers 8 frames x styles 2 seed 7")


def test_travel_distance_bounded_by_max_step():
    topo, seqs = synth_dataset(SynthSpec(4, 200, 1, 2))
    clips = window_clips(seqs, topo)
    for c in clips:
        steps = np.linalg.norm(np.diff(c.route[:, :2], axis=0), axis=1)
        assert 0 <= c.travel_distance <= 119 * steps.max() + 1e-12
        assert c.travel_distance == travel_distance(c.seq, topo)
