import numpy as np
import pytest

from motionsynth.skeleton import DirectionFrame, SkeletonTopology, forward_kinematics


def random_topology(rng, J, feet=False):
    parent = np.array([-1] + [int(rng.integers(0, j)) for j in range(1, J)])
    bone = np.where(parent < 0, 0.0, rng.uniform(0.05, 0.6, size=J))
    return SkeletonTopology(parent, bone, (J - 2, J - 1) if feet and J >= 3 else None)


def random_dirs(rng, shape):
    v = rng.normal(size=shape + (3,))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_state(rng, topo, frames=None):
    lead = () if frames is None else (frames,)
    dirs = random_dirs(rng, lead + (topo.joint_count - 1,))
    root = rng.normal(size=lead + (3,))
    return forward_kinematics(DirectionFrame(dirs, root), topo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_topology():
    """Pelvis with two two-bone legs; feet are joints 2 and 4."""
    return SkeletonTopology([-1, 0, 1, 0, 3], [0.0, 0.12, 0.5, 0.12, 0.5], feet=(2, 4))


def wobbly_clip(rng, topo, frames):
    """Smoothly drifting random pose sequence as a MotionClip."""
    from motionsynth.dataset import make_clip
    from motionsynth.skeleton import MotionSequence

    base = random_dirs(rng, (topo.joint_count - 1,))
    drift = rng.normal(scale=0.05, size=(frames, topo.joint_count - 1, 3)).cumsum(axis=0)
    dirs = base + drift
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    root = np.zeros((frames, 3))
    root[:, 0] = np.cumsum(rng.uniform(0.0, 0.04, size=frames))
    root[:, 2] = np.cumsum(rng.uniform(-0.02, 0.02, size=frames))
    root[:, 1] = 0.9
    seq = MotionSequence(forward_kinematics(DirectionFrame(dirs, root), topo))
    return make_clip(seq, topo)


# ---------------------------------------------------------------------------
# desk-scale models shared by the acceptance suite

DESK_SEED = 7
DESK_EPOCHS = 50
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_data():
    from motionsynth.dataset import SynthSpec, split, synth_dataset, window_clips

    topo, seqs = synth_dataset(SynthSpec(8, 300, 2, DESK_SEED))
    return topo, split(window_clips(seqs, topo, M=120), 0.25, DESK_SEED)


def _timed_fit(model, clips):
    import time

    t0 = time.perf_counter()
    model.fit(clips)
    return model, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_short(desk_data):
    from motionsynth.short_range import StyleTransferAutoencoder

    topo, data = desk_data
    return _timed_fit(StyleTransferAutoencoder(topo, epochs=DESK_EPOCHS, random_state=DESK_SEED), data.train)


@pytest.fixture(scope="session")
def desk_short_ablated(desk_data):
    from motionsynth.short_range import StyleTransferAutoencoder

    topo, data = desk_data
    model = StyleTransferAutoencoder(topo, epochs=DESK_EPOCHS, consistency_weight=0.0, random_state=DESK_SEED)
    return _timed_fit(model, data.train)


@pytest.fixture(scope="session")
def desk_long(desk_data):
    from motionsynth.long_range import TransitionGenerator

    topo, data = desk_data
    return _timed_fit(TransitionGenerator(topo, epochs=DESK_EPOCHS, random_state=DESK_SEED), data.train)
