"""End-to-end assembly: plan, retrieve, restyle, connect, evaluate and export."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import CLIP_LENGTH, TRANSITION_LENGTH, MotionClip, make_clip
from .errors import EmptyEval, ParseError, PlanInfeasible
from .long_range import TransitionGenerator, interpolation_mse, supervised_windows
from .search import DEFAULT_SIGMA, SubGoalPlan, align_clip, build_index, match_clip_widening, sample_subgoals
from .short_range import StyleTransferAutoencoder, diversity
from .skeleton import (
    MotionSequence, SkeletonTopology, facing_angle, ground, load_motion, rotate_positions, save_motion,
    validate_state,
)

STYLE_POLICIES = ("random", "self", "none")
MAX_REPLANS = 20


# ---------------------------------------------------------------------------
# configuration

def parse_key_values(text: str, path="<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, lineno, "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ParseError(path, lineno, "empty key or value")
        out[key] = value.strip('"').strip("'")
    return out


def coerce(value: str, kind, path="<config>", key="?"):
    """Convert a config string to ``kind`` (int, float, bool, str or Optional[str])."""
    try:
        if kind in (bool, "bool"):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError
            return value.lower() in ("true", "1")
        if kind in (int, "int"):
            return int(value)
        if kind in (float, "float"):
            return float(value)
    except ValueError:
        raise ParseError(path, 1, f"bad value {value!r} for {key}") from None
    return value


def apply_overrides(obj, values: dict, path="<config>"):
    """Copy of dataclass ``obj`` with string ``values`` coerced onto its fields."""
    kinds = {f.name: f.type for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in values.items():
        if key not in kinds:
            raise ParseError(path, 1, f"unknown key {key!r}")
        kind = kinds[key].split("[")[-1].rstrip("]") if isinstance(kinds[key], str) else kinds[key]
        changes[key] = coerce(value, kind, path, key)
    return dataclasses.replace(obj, **changes)


@dataclass(frozen=True)
class GenerationConfig:
    """Everything ``generate`` needs besides the endpoints, data and models.

    ``style_source`` is ``random`` (a clip drawn from the database), ``self``
    (each clip restyled by itself), ``none`` (no restyling) or a path to a
    ``.mseq`` file whose first ``clip_length`` frames give the style.
    """

    num_segments: int = 3
    clip_length: int = CLIP_LENGTH
    transition_length: int = TRANSITION_LENGTH
    sigma: float = DEFAULT_SIGMA
    plan_seed: int = 0
    style_seed: int = 0
    model_seed: int = 0
    short_checkpoint: Optional[str] = None
    long_checkpoint: Optional[str] = None
    style_source: str = "random"
    max_replans: int = MAX_REPLANS

    def __post_init__(self):
        if self.num_segments < 1:
            raise ValueError("num_segments must be >= 1")
        if self.clip_length < 3 or self.transition_length < 3:
            raise ValueError("clip and transition lengths must be >= 3")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def total_frames(self) -> int:
        L, N = self.num_segments, self.transition_length
        return 2 + L * self.clip_length + (L + 1) * (N - 2)

    @classmethod
    def parse(cls, text: str, path="<config>", **defaults) -> "GenerationConfig":
        try:
            return apply_overrides(cls(**defaults), parse_key_values(text, path), path)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(path, 1, str(exc)) from None


# ---------------------------------------------------------------------------
# generation

@dataclass
class MotionDatabase:
    """Indexed reference clips sharing one skeleton."""

    topology: SkeletonTopology
    clips: list

    def __post_init__(self):
        self.index = build_index(self.clips)


@dataclass(frozen=True)
class Part:
    """One stretch of the output: ``kind`` is start, transition, clip or end.

    ``start``/``stop`` are frame indices into the output (stop exclusive).
    ``clip_id``/``style_id`` are database ids (-1 when not applicable).
    """

    kind: str
    segment: int
    start: int
    stop: int
    clip_id: int = -1
    style_id: int = -1


@dataclass
class GenerationResult:
    sequence: MotionSequence
    parts: list
    plan: SubGoalPlan
    seeds: dict
    sigmas: list = field(default_factory=list)

    @property
    def clip_ids(self) -> list:
        return [p.clip_id for p in self.parts if p.kind == "clip"]

    @property
    def style_ids(self) -> list:
        return [p.style_id for p in self.parts if p.kind == "clip"]

    @property
    def boundaries(self) -> list:
        """``(kind, segment, start, stop)`` for every clip and transition."""
        return [(p.kind, p.segment, p.start, p.stop) for p in self.parts if p.kind in ("clip", "transition")]

    def frame_owner(self) -> np.ndarray:
        """Index into ``parts`` for every output frame."""
        owner = np.full(len(self.sequence), -1)
        for i, p in enumerate(self.parts):
            owner[p.start:p.stop] = i
        return owner


def _plan_and_match(cfg: GenerationConfig, p_S, p_E, db: MotionDatabase, rng: np.random.Generator):
    """Plan sub-goals and match one clip per segment, re-planning on failure."""
    last = None
    for _ in range(cfg.max_replans):
        try:
            plan = sample_subgoals(p_S, p_E, cfg.num_segments, db.index, rng)
            picks = [match_clip_widening(d, db.index, rng, cfg.sigma) for d in plan.segment_dists]
            return plan, picks
        except PlanInfeasible as exc:
            last = exc
    raise PlanInfeasible(f"gave up after {cfg.max_replans} plans: {last}")


def _style_clip(cfg: GenerationConfig, clip: MotionClip, db: MotionDatabase, rng: np.random.Generator,
                explicit: Optional[MotionClip]):
    if cfg.style_source == "random":
        sid = int(rng.integers(len(db.clips)))
        return sid, db.clips[sid]
    if cfg.style_source in ("self", "none"):
        return -1, clip
    return -1, explicit


def generate(cfg: GenerationConfig, s_S, s_E, database: MotionDatabase,
             short_model: StyleTransferAutoencoder, long_model: TransitionGenerator) -> GenerationResult:
    """Synthesize ``[s_S, T, clip_1, T, ..., clip_L, T, s_E]`` between two states.

    Transitions contribute their ``N - 2`` interior frames; their boundary
    frames are the neighbouring clip or endpoint states themselves.
    """
    topo = database.topology
    short_model.check_topology(topo)
    long_model.check_topology(topo)
    if long_model.transition_length != cfg.transition_length:
        raise ValueError(f"transition model makes {long_model.transition_length} frames, config asks "
                         f"{cfg.transition_length}")
    s_S = np.asarray(s_S, dtype=float)
    s_E = np.asarray(s_E, dtype=float)
    for name, s in (("start", s_S), ("end", s_E)):
        report = validate_state(s, topo)
        if not report.ok:
            raise ValueError(f"{name} state is not bone-consistent (max deviation {report.max_deviation:.3g})")
    explicit = None
    if cfg.style_source not in STYLE_POLICIES:
        seq = load_motion(cfg.style_source, topo)
        if len(seq) < cfg.clip_length:
            raise ValueError(f"style file has {len(seq)} frames, need {cfg.clip_length}")
        explicit = make_clip(seq[:cfg.clip_length], topo)

    plan_rng = np.random.default_rng(cfg.plan_seed)
    style_rng = np.random.default_rng(cfg.style_seed)
    plan, picks = _plan_and_match(cfg, ground(s_S[topo.root]), ground(s_E[topo.root]), database, plan_rng)

    clips, style_ids = [], []
    for l, (cid, _) in enumerate(picks):
        source = database.clips[cid]
        if len(source) != cfg.clip_length:
            raise ValueError(f"database clip {cid} has {len(source)} frames, config asks {cfg.clip_length}")
        aligned = align_clip(source, plan.points[l], plan.headings[l], topo, cid).clip
        sid, style = _style_clip(cfg, aligned, database, style_rng, explicit)
        if cfg.style_source != "none":
            aligned = short_model.transfer([aligned], [style])[0]
        clips.append(aligned.positions)
        style_ids.append(sid)

    starts = np.stack([s_S] + [c[-1] for c in clips])
    ends = np.stack([c[0] for c in clips] + [s_E])
    interiors = long_model.predict_interior(starts, ends)

    frames = [s_S[None]]
    parts = [Part("start", 0, 0, 1)]
    cursor = 1

    def push(kind, segment, block, clip_id=-1, style_id=-1):
        nonlocal cursor
        frames.append(block)
        parts.append(Part(kind, segment, cursor, cursor + len(block), clip_id, style_id))
        cursor += len(block)

    for l, clip in enumerate(clips):
        push("transition", l, interiors[l])
        push("clip", l, clip, picks[l][0], style_ids[l])
    push("transition", len(clips), interiors[-1])
    push("end", len(clips), s_E[None])
    seq = MotionSequence(np.concatenate(frames))
    seeds = {"plan": cfg.plan_seed, "style": cfg.style_seed, "model": cfg.model_seed}
    return GenerationResult(seq, parts, plan, seeds, [s for _, s in picks])


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class MetricsReport:
    """Scalar metrics plus named curves; round-trips through ``format``/``parse``."""

    scalars: dict
    curves: dict

    def format(self) -> str:
        lines = [f"{k} {format(float(v), '.17g')}" for k, v in self.scalars.items()]
        for name, curve in self.curves.items():
            lines.append(f"[curve {name}]")
            lines.append("frame,value")
            lines.extend(f"{t},{format(float(v), '.17g')}" for t, v in enumerate(curve))
            lines.append("[end]")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, path="<report>") -> "MetricsReport":
        scalars, curves = {}, {}
        name, rows = None, []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if name is not None:
                if line == "[end]":
                    curves[name] = np.array(rows)
                    name, rows = None, []
                elif line != "frame,value":
                    try:
                        t, v = line.split(",")
                        if int(t) != len(rows):
                            raise ValueError
                        rows.append(float(v))
                    except ValueError:
                        raise ParseError(path, lineno, "expected 'frame,value' row") from None
            elif line.startswith("[curve ") and line.endswith("]"):
                name = line[7:-1].strip()
            else:
                tok = line.split()
                try:
                    if len(tok) != 2:
                        raise ValueError
                    scalars[tok[0]] = float(tok[1])
                except ValueError:
                    raise ParseError(path, lineno, "expected 'key value'") from None
        if name is not None:
            raise ParseError(path, lineno, f"curve {name!r} has no [end]")
        return cls(scalars, curves)


def style_diversity(model: StyleTransferAutoencoder, content: Sequence[MotionClip],
                    styles: Sequence[MotionClip]) -> float:
    """Mean over content clips of the diversity of their renderings in every style."""
    if len(content) == 0 or len(styles) == 0:
        raise EmptyEval("need content and style clips")
    values = [diversity(model.transfer([c] * len(styles), list(styles))) for c in content]
    return float(np.mean(values))


def rotated_pairs(clips: Sequence[MotionClip], angle: float, N: int, topo: SkeletonTopology):
    """Boundary pairs for the rotated-endpoint protocol.

    The start is the last frame of clip ``i``. The end is the first frame of
    clip ``i + 1`` placed where clip ``i``'s walk would be ``N - 1`` frames
    later, then turned by ``angle`` about its own root.
    """
    starts, ends = [], []
    for i, a in enumerate(clips):
        b = clips[(i + 1) % len(clips)].positions[0]
        s = a.positions[-1]
        speed = a.travel_distance / (len(a) - 1)
        heading = facing_angle(s, topo)
        target = ground(s[topo.root]) + speed * (N - 1) * np.array([np.cos(heading), np.sin(heading)])
        # face the end state along the start's heading before the protocol turn
        b = rotate_positions(b, heading - facing_angle(b, topo), ground(b[topo.root]))
        shift = target - ground(b[topo.root])
        b = b + np.array([shift[0], 0.0, shift[1]])
        starts.append(s)
        ends.append(rotate_positions(b, angle, target))
    return np.stack(starts), np.stack(ends)


def foot_height_curve(model: TransitionGenerator, clips: Sequence[MotionClip], angle: float) -> np.ndarray:
    """Mean foot height per transition frame over rotated endpoint pairs."""
    if len(clips) == 0:
        raise EmptyEval("no clips for foot-height curves")
    topo = model.topology
    feet = list(topo.require_feet())
    starts, ends = rotated_pairs(clips, angle, model.transition_length, topo)
    full = np.stack([seq.positions for seq in model.predict(starts, ends)])
    return full[:, :, feet, 1].mean(axis=(0, 2))


def max_jump_ratio(curve: np.ndarray) -> float:
    """Largest frame-to-frame change over the median change."""
    jumps = np.abs(np.diff(np.asarray(curve, dtype=float)))
    med = float(np.median(jumps))
    return float(jumps.max() / med) if med > 0 else float("inf") if jumps.max() > 0 else 0.0


def evaluate(short_model: StyleTransferAutoencoder, long_model: TransitionGenerator, heldout: Sequence[MotionClip],
             style_pool: Sequence[MotionClip], seed: int = 0, styles: int = 4, contents: int = 4,
             rotations=(0.0, np.pi / 4, np.pi / 2), window_stride: int = 20) -> MetricsReport:
    """Diversity, interpolation MSE and rotated foot-height curves on held-out clips."""
    if len(heldout) == 0 or len(style_pool) == 0:
        raise EmptyEval("evaluation needs held-out clips and a style pool")
    rng = np.random.default_rng(seed)
    content = [heldout[i] for i in rng.choice(len(heldout), min(contents, len(heldout)), replace=False)]
    picked = [style_pool[i] for i in rng.choice(len(style_pool), min(styles, len(style_pool)), replace=False)]
    windows = supervised_windows(heldout, long_model.transition_length, window_stride)
    if not windows:
        raise EmptyEval("held-out clips are shorter than a transition")
    scalars = {
        "seed": seed,
        "heldout_clips": len(heldout),
        "diversity": style_diversity(short_model, content, picked),
    }
    curves = {"interpolation_mse": interpolation_mse(long_model, np.stack(windows))}
    for angle in rotations:
        name = f"foot_height_rot{int(round(np.degrees(angle)))}"
        curves[name] = foot_height_curve(long_model, heldout, angle)
        scalars[f"{name}_jump_ratio"] = max_jump_ratio(curves[name])
    scalars["interpolation_mse_mean"] = float(curves["interpolation_mse"].mean())
    return MetricsReport(scalars, curves)


# ---------------------------------------------------------------------------
# export

def export_frames(result: GenerationResult, directory, name: str = "generated") -> list:
    """Write ``<name>.mseq`` and a plain-text per-frame joint dump with part annotations."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mseq = directory / f"{name}.mseq"
    dump = directory / f"{name}.frames.txt"
    save_motion(result.sequence, mseq)
    pos = result.sequence.positions
    lines = [f"# frames {pos.shape[0]} joints {pos.shape[1]} fps {format(result.sequence.fps, '.17g')}"]
    lines.append("# seeds " + " ".join(f"{k}={v}" for k, v in result.seeds.items()))
    for i, p in enumerate(result.parts):
        lines.append(f"# part {i} {p.kind} segment {p.segment} frames {p.start} {p.stop} "
                     f"clip {p.clip_id} style {p.style_id}")
    owner = result.frame_owner()
    for t, frame in enumerate(pos):
        lines.append(f"{t} {owner[t]} " + " ".join(format(float(v), ".17g") for v in frame.ravel()))
    dump.write_text("\n".join(lines) + "\n")
    return [mseq, dump]


def load_frame_dump(path) -> tuple[np.ndarray, list]:
    """Positions ``(T, J, 3)`` and the part list from a dump written by ``export_frames``."""
    parts, rows, J = [], [], None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = raw.split()
        if not tok:
            continue
        try:
            if tok[0] == "#":
                if tok[1] == "frames":
                    J = int(tok[4])
                elif tok[1] == "part":
                    parts.append(Part(tok[3], int(tok[5]), int(tok[7]), int(tok[8]), int(tok[10]), int(tok[12])))
                continue
            if J is None or len(tok) != 2 + 3 * J:
                raise ValueError
            rows.append([float(v) for v in tok[2:]])
        except (ValueError, IndexError):
            raise ParseError(path, lineno, "malformed frame dump line") from None
    if J is None:
        raise ParseError(path, 1, "missing frame dump header")
    return np.array(rows).reshape(-1, J, 3), parts
