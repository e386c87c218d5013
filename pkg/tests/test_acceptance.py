"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the summary lines
also appear at the end of the terminal report.
"""
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, DESK_EPOCHS, random_dirs, random_state, random_topology
from motionsynth import checks
from motionsynth.errors import NoMatch
from motionsynth.long_range import interpolation_mse, loss_adversarial, loss_position, supervised_windows
from motionsynth.pipeline import GenerationConfig, MotionDatabase, foot_height_curve, generate, max_jump_ratio
from motionsynth.search import align_clip, build_index, match_clip, sample_subgoals
from motionsynth.short_range import (
    diversity, loss_gram, loss_reconstruction, loss_route, loss_style_consistency, loss_total,
)
from motionsynth.skeleton import DirectionFrame, direction_vectors, forward_kinematics, rotate_positions
from motionsynth.slerp import REGULAR, make_bases, recover_params_batch, synthesize_directions


@contextmanager
def criterion(number: int, title: str):
    """Time the block and record one summary line whatever the outcome."""
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"criterion {number} FAIL  {title}  ({time.perf_counter() - t0:.1f} s): {type(exc).__name__}: {exc}"
        ACCEPTANCE_LINES.append(line.splitlines()[0])
        print(ACCEPTANCE_LINES[-1])
        raise
    extra = "  ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE_LINES.append(f"criterion {number} PASS  {title}  ({time.perf_counter() - t0:.1f} s)  {extra}".rstrip())
    print(ACCEPTANCE_LINES[-1])


def rodrigues_slerp(v1, vN, t):
    """Independent slerp: rotate ``v1`` about the shared normal by ``t`` of the angle; batched."""
    axis = np.cross(v1, vN)
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = (t * np.arccos(np.clip(np.sum(v1 * vN, axis=-1), -1, 1)))[..., None]
    return (v1 * np.cos(angle) + np.cross(axis, v1) * np.sin(angle)
            + axis * np.sum(axis * v1, axis=-1, keepdims=True) * (1 - np.cos(angle)))


def pairwise(p):
    return np.linalg.norm(p[..., :, None, :] - p[..., None, :, :], axis=-1)


# ---------------------------------------------------------------------------

def test_criterion_1_geometry():
    with criterion(1, "geometry: FK/direction identity, bone lengths, rigid transforms") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(101)
        worst = dict(identity=0.0, bones=0.0, rigid=0.0)
        cases = 0
        for _ in range(100):
            topo = random_topology(rng, int(rng.integers(2, 26)))
            states = random_state(rng, topo, frames=100)
            back = forward_kinematics(direction_vectors(states, topo), topo)
            worst["identity"] = max(worst["identity"], np.abs(back - states).max())
            raw = rng.normal(size=(100, topo.joint_count - 1, 3))  # unnormalized on purpose
            posed = forward_kinematics(DirectionFrame(raw, rng.normal(size=(100, 3))), topo)
            dev = np.abs(topo.bone_lengths_of(posed) - topo.bone_length[topo.non_root])
            worst["bones"] = max(worst["bones"], dev.max())
            angle = rng.uniform(-np.pi, np.pi)
            moved = rotate_positions(states, angle, rng.normal(size=2)) + rng.normal(size=3)
            worst["rigid"] = max(worst["rigid"], np.abs(pairwise(moved) - pairwise(states)).max())
            cases += len(states)
        elapsed = time.perf_counter() - t0
        info.update(cases=cases, **{k: f"{v:.1e}" for k, v in worst.items()}, runtime=f"{elapsed:.2f}s")
        assert cases == 10_000
        assert max(worst.values()) < 1e-9, worst
        assert elapsed < 10.0


def test_criterion_2_slerp_parameterization():
    with criterion(2, "(gamma, lambda) synthesis and recovery") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(202)
        n = 100_000
        v1, vN = random_dirs(rng, (n,)), random_dirs(rng, (n,))
        keep = np.linalg.norm(np.cross(v1, vN), axis=-1) > 1e-3
        v1, vN = v1[keep], vN[keep]
        bases = make_bases(v1, vN)
        assert np.all(bases.kind == REGULAR)
        gamma, lam = rng.uniform(-1, 1, len(v1)), rng.uniform(0, 1, len(v1))
        out = synthesize_directions(bases, gamma, lam)
        unit = np.abs(np.linalg.norm(out, axis=-1) - 1).max()

        zero, one = np.zeros(len(v1)), np.ones(len(v1))
        boundary = max(
            np.abs(synthesize_directions(bases, zero, zero) - v1).max(),
            np.abs(synthesize_directions(bases, zero, one) - vN).max(),
            np.abs(synthesize_directions(bases, one, lam) - bases.n_hat).max(),
            np.abs(synthesize_directions(bases, -one, lam) + bases.n_hat).max(),
        )
        oracle = np.abs(synthesize_directions(bases, zero, lam) - rodrigues_slerp(v1, vN, lam)).max()

        inside = np.abs(gamma) < 1 - 1e-3
        rec = recover_params_batch(bases, out)
        round_trip = max(np.abs(rec[inside, 0] - gamma[inside]).max(), np.abs(rec[inside, 1] - lam[inside]).max())

        # parallel, antiparallel and nearly parallel endpoints
        u = random_dirs(rng, (1000,))
        near = u + 1e-9 * random_dirs(rng, (1000,))
        finite = True
        for other in (u, -u, near / np.linalg.norm(near, axis=-1, keepdims=True)):
            deg = make_bases(u, other)
            for g in (-1.0, 0.0, 0.4, 1.0):
                for l in (0.0, 0.5, 1.0):
                    res = synthesize_directions(deg, np.full(1000, g), np.full(1000, l))
                    finite &= bool(np.all(np.isfinite(res)))
                    finite &= bool(np.all(np.isfinite(recover_params_batch(deg, res))))
        elapsed = time.perf_counter() - t0
        info.update(cases=len(v1), unit=f"{unit:.1e}", boundary=f"{boundary:.1e}", oracle=f"{oracle:.1e}",
                    round_trip=f"{round_trip:.1e}", runtime=f"{elapsed:.2f}s")
        assert len(v1) > 0.99 * n
        assert unit < 1e-9 and boundary < 1e-9 and oracle < 1e-9
        assert round_trip < 1e-6
        assert finite
        assert elapsed < 30.0


def test_criterion_3_gradcheck():
    with criterion(3, "finite-difference gradients of every primitive and both models") as info:
        t0 = time.perf_counter()
        errors = checks.gradcheck_suite(0)
        elapsed = time.perf_counter() - t0
        worst = max(errors, key=errors.get)
        info.update(checks=len(errors), worst=f"{worst}:{errors[worst]:.1e}", runtime=f"{elapsed:.1f}s")
        assert {"model.short_range", "model.long_range", "model.discriminator"} <= set(errors)
        assert errors[worst] < checks.TOLERANCE, errors
        assert elapsed < 300.0


def test_criterion_4_loss_formulas():
    with criterion(4, "loss formulas on hand-computed fixtures") as info:
        # reconstruction: squared diffs 1, 1, 4 -> mean 2
        rec = loss_reconstruction([1.0, 2.0, 3.0], [2.0, 3.0, 5.0]).item()
        assert rec == 2.0
        # route: diffs 2, 2, 2 -> mean 4
        rte = loss_route([0.0, 1.0, -1.0], [2.0, 3.0, 1.0]).item()
        assert rte == 4.0
        # style consistency: two frames (0,0,0) and (1,1,2); a differing pair gives (1+1+4)/3 = 2
        h = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 2.0]])
        draws = {seed: loss_style_consistency(h, np.random.default_rng(seed)).item() for seed in range(8)}
        assert set(draws.values()) == {0.0, 2.0}
        cst = 2.0
        # gram term: one channel over two frames, [1, 0] vs [1, 1]; three of four entries differ by 1
        trn_gram = loss_gram(np.array([[[1.0, 0.0]]]), np.array([[[1.0, 1.0]]])).item()
        assert trn_gram == 0.75
        trn = 1.0 + trn_gram
        total = loss_total(rec, cst, rte, trn)
        assert total == pytest.approx(2.0 + 0.02 + 2.0 + 1.75, rel=1e-15, abs=0)
        # generator position loss: squared diffs 1, 1, 4 over three coordinates
        pos = loss_position(np.array([[1.0, 2.0, 3.0]]), np.array([[2.0, 3.0, 5.0]])).item()
        assert pos == 2.0
        # least-squares adversarial terms
        l_d, l_g = loss_adversarial(np.full(3, 0.5), np.full(3, 0.5))
        assert (l_d.item(), l_g.item()) == (0.25, 0.25)
        l_d, l_g = loss_adversarial(np.array([1.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
        assert l_d.item() == pytest.approx(1 / 3, rel=1e-15) and l_g.item() == pytest.approx(2 / 3, rel=1e-15)
        # orthogonal channel mixing leaves the gram term unchanged
        rng = np.random.default_rng(404)
        worst = 0.0
        for _ in range(200):
            a, b = rng.normal(size=(2, 2, 5, 12))
            q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
            mix = lambda x: np.einsum("bct,cd->bdt", x, q)
            worst = max(worst, abs(loss_gram(mix(a), mix(b)).item() - loss_gram(a, b).item()))
        info.update(total=total, l_d=0.25, l_g=0.25, gram_invariance=f"{worst:.1e}")
        assert worst < 1e-9


def test_criterion_5_reference_search():
    with criterion(5, "sub-goal plans and clip matching") as info:
        idx = build_index(np.linspace(1.5, 4.0, 20))
        mean = 0.5 * (idx.d_min + idx.d_max)
        rng = np.random.default_rng(505)
        segments = 0
        for _ in range(10_000):
            L = int(rng.integers(1, 6))
            angle = rng.uniform(-np.pi, np.pi)
            p_E = rng.uniform(0.5, 1.5) * L * mean * np.array([np.cos(angle), np.sin(angle)])
            plan = sample_subgoals([0.0, 0.0], p_E, L, idx, rng)
            d = plan.segment_dists
            assert np.all(d >= idx.d_min) and np.all(d <= idx.d_max)
            segments += len(d)
        # band is open on both sides: (d_l - sigma, d_l)
        band = build_index([1.0, 1.95, 2.0, 2.05])
        assert match_clip(2.04, band, np.random.default_rng(0), sigma=0.1) in (1, 2)
        picks = {match_clip(2.0, band, np.random.default_rng(s), sigma=0.1) for s in range(50)}
        assert picks == {1}
        with pytest.raises(NoMatch):
            match_clip(1.0, band, np.random.default_rng(0), sigma=0.1)
        with pytest.raises(NoMatch):
            # both ends exactly on the band edges (dyadic values, no rounding)
            match_clip(2.0, build_index([1.5, 2.0]), np.random.default_rng(0), sigma=0.5)
        a = sample_subgoals([0, 0], [9, 2], 3, idx, np.random.default_rng(9))
        b = sample_subgoals([0, 0], [9, 2], 3, idx, np.random.default_rng(9))
        assert a.points.tobytes() == b.points.tobytes()
        ma = [match_clip(2.6, idx, np.random.default_rng(3)) for _ in range(5)]
        mb = [match_clip(2.6, idx, np.random.default_rng(3)) for _ in range(5)]
        assert ma == mb
        info.update(plans=10_000, segments=segments)


def test_criterion_6_desk_training(desk_data, desk_short, desk_short_ablated, desk_long):
    with criterion(6, f"desk-scale training over {DESK_EPOCHS} epochs") as info:
        topo, data = desk_data
        short, t_short = desk_short
        ablated, t_ablated = desk_short_ablated
        long, t_long = desk_long
        s_hist = np.array(short.history_)[:, 0]
        l_hist = np.array(long.history_)[:, 0]
        short_drop = 1 - s_hist[:DESK_EPOCHS].min() / s_hist[0]
        long_drop = 1 - l_hist[:DESK_EPOCHS].min() / l_hist[0]
        held = data.heldout[:16]
        styles = [data.train[(i * 5) % len(data.train)] for i in range(16)]
        std = short.style_temporal_std(short.transfer(held, styles))
        std_ablated = ablated.style_temporal_std(ablated.transfer(held, styles))
        info.update(short_drop=f"{short_drop:.1%}", long_drop=f"{long_drop:.1%}",
                    short_time=f"{t_short:.0f}s", long_time=f"{t_long:.0f}s",
                    style_std=f"{std:.6f}", ablated_std=f"{std_ablated:.6f}")
        assert len(held) == 16
        assert short_drop >= 0.30 and long_drop >= 0.30
        assert max(t_short, t_ablated, t_long) < 15 * 60
        assert std < std_ablated


def desk_endpoints(data, db):
    s_S = data.heldout[0].positions[0]
    mean = float(np.mean(db.index.distances))
    return s_S, s_S + np.array([0.5 * mean, 0.0, 3.0 * mean])


def test_criterion_7_end_to_end(desk_data, desk_short, desk_long):
    topo, data = desk_data
    short, long = desk_short[0], desk_long[0]
    with criterion(7, "three-segment generation") as info:
        t0 = time.perf_counter()
        db = MotionDatabase(topo, data.train)
        cfg = GenerationConfig(num_segments=3, plan_seed=11, style_seed=12)
        s_S, s_E = desk_endpoints(data, db)
        first = generate(cfg, s_S, s_E, db, short, long)
        elapsed = time.perf_counter() - t0
        second = generate(cfg, s_S, s_E, db, short, long)
        pos = first.sequence.positions
        bones = np.abs(topo.bone_lengths_of(pos) - topo.bone_length[topo.non_root]).max()
        # rebuild every styled clip from the recorded plan and ids; the frames on
        # both sides of each junction must be those clips' own frames, bit for bit
        clip_parts = [p for p in first.parts if p.kind == "clip"]
        assert len(clip_parts) == 3
        junctions = 0
        for l, part in enumerate(clip_parts):
            placed = align_clip(db.clips[part.clip_id], first.plan.points[l], first.plan.headings[l], topo).clip
            styled = short.transfer([placed], [db.clips[part.style_id]])[0].positions
            assert np.array_equal(pos[part.start:part.stop], styled)
            assert np.array_equal(pos[part.start], styled[0]) and np.array_equal(pos[part.stop - 1], styled[-1])
            junctions += 2
        # transitions are conditioned on exactly those boundary frames
        for part in first.parts:
            if part.kind == "transition":
                mid = long.predict_interior(pos[[part.start - 1]], pos[[part.stop]])[0]
                assert np.abs(mid - pos[part.start:part.stop]).max() < 1e-12
        info.update(frames=len(pos), bones=f"{bones:.1e}", junctions=junctions, runtime=f"{elapsed:.1f}s")
        assert len(pos) == 2 + 3 * 120 + 4 * 38 == cfg.total_frames
        assert np.array_equal(pos[0], s_S) and np.array_equal(pos[-1], s_E)
        assert bones < 1e-9
        assert pos.tobytes() == second.sequence.positions.tobytes()
        assert elapsed < 60.0


def test_criterion_8_metrics(desk_data, desk_long):
    topo, data = desk_data
    long = desk_long[0]
    with criterion(8, "diversity, interpolation error and foot-height continuity") as info:
        clip = data.heldout[3]
        assert diversity([clip] * 5) == 0.0
        windows = np.stack(supervised_windows(data.heldout, long.transition_length, 20))
        oracle = lambda s, e: windows[:, 1:-1]
        assert np.all(interpolation_mse(oracle, windows) == 0.0)
        ratios = {}
        for name, angle in (("0", 0.0), ("pi/4", np.pi / 4), ("pi/2", np.pi / 2)):
            ratios[name] = max_jump_ratio(foot_height_curve(long, data.heldout, angle))
        info.update(**{f"jump_ratio[{k}]": f"{v:.2f}" for k, v in ratios.items()})
        assert all(r < 5.0 for r in ratios.values()), ratios
