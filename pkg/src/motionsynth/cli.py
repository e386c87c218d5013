"""Command-line entry point: ``motionsynth <command> [options]``.

Exit codes: 0 ok, 2 infeasible plan, 3 parse/config error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import TOLERANCE, gradcheck_suite
from .dataset import CLIP_LENGTH, SynthSpec, load_dataset, make_clip, save_dataset, split, synth_dataset, window_clips
from .errors import (
    CheckpointMismatch, EmptyDatabase, EmptyEval, FootJointsUndeclared, NonFiniteLoss, ParseError, PlanInfeasible,
    SkeletonMismatch,
)
from .long_range import TransitionGenerator, interpolate
from .pipeline import (
    GenerationConfig, GenerationResult, MotionDatabase, Part, coerce, evaluate, export_frames, generate,
    parse_key_values,
)
from .search import build_index, sample_subgoals
from .short_range import StyleTransferAutoencoder, transfer_style
from .skeleton import load_motion, save_motion

EXIT_OK, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4
HELDOUT_FRACTION = 0.25

log = logging.getLogger("motionsynth")


# ---------------------------------------------------------------------------
# helpers

def read_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ParseError(path, 0, "config file not found")
    return parse_key_values(path.read_text(), path)


def estimator_overrides(estimator_cls, config: dict, prefix: str, path="<config>") -> dict:
    """Config keys ``<prefix>.<param>`` coerced to the estimator's default types."""
    defaults = estimator_cls().get_params()
    out = {}
    for key, value in config.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in defaults or name == "topology":
            raise ParseError(path, 1, f"unknown {prefix} option {name!r}")
        out[name] = coerce(value, type(defaults[name]), path, key)
    return out


def state_ref(text: str, topo) -> np.ndarray:
    """``file.mseq@i`` (negative i counts from the end) to one pose."""
    path, _, index = text.rpartition("@")
    if not path:
        path, index = text, "0"
    try:
        i = int(index)
    except ValueError:
        raise ParseError(text, 0, "expected 'file.mseq@frame'") from None
    seq = load_motion(path, topo)
    if not -len(seq) <= i < len(seq):
        raise ParseError(path, 0, f"frame {i} outside 0..{len(seq) - 1}")
    return seq.positions[i]


def load_clips(args, config: dict):
    """Topology and windowed clip split of the ``--data`` directory."""
    if args.data is None:
        raise ParseError("--data", 0, "a data directory is required")
    topo, seqs = load_dataset(args.data)
    length = int(config.get("clip_length", CLIP_LENGTH))
    clips = window_clips(seqs, topo, M=length)
    if clips.skipped:
        log.warning("skipped %d sequences shorter than %d frames", clips.skipped, length)
    if not clips:
        raise EmptyDatabase(f"{args.data}: no sequence has {length} frames")
    return topo, split(clips, float(config.get("heldout_fraction", HELDOUT_FRACTION)), args.seed)


def out_path(args, default: str) -> Path:
    return Path(args.out if args.out is not None else default)


# ---------------------------------------------------------------------------
# commands

def cmd_synth_data(args, config):
    spec = SynthSpec()
    if args.spec is not None:
        spec = SynthSpec.parse(Path(args.spec).read_text(), args.spec)
    overrides = {k: int(coerce(v, int, args.config, k)) for k, v in config.items()
                 if k in ("walkers", "frames", "styles", "seed")}
    if args.seed_given:
        overrides["seed"] = args.seed
    spec = SynthSpec(**{**spec.__dict__, **overrides})
    topo, seqs = synth_dataset(spec)
    directory = out_path(args, "synth_data")
    save_dataset(directory, topo, seqs)
    (directory / "synth.spec").write_text(spec.format())
    print(f"wrote {len(seqs)} sequences of {spec.frames} frames to {directory}")


def cmd_train_short(args, config):
    topo, data = load_clips(args, config)
    params = estimator_overrides(StyleTransferAutoencoder, config, "short", args.config)
    if args.epochs is not None:
        params["epochs"] = args.epochs
    params.setdefault("random_state", args.seed)
    model = StyleTransferAutoencoder(topo, **params).initialize(data.train)
    for epoch in range(model.epochs):
        model.partial_fit(data.train)
        print(f"epoch {epoch} " + " ".join(f"{v:.6g}" for v in model.history_[-1]), flush=True)
    path = out_path(args, "short.ckpt")
    model.save(path)
    print(f"saved {path}")


def cmd_train_long(args, config):
    topo, data = load_clips(args, config)
    params = estimator_overrides(TransitionGenerator, config, "long", args.config)
    if args.epochs is not None:
        params["epochs"] = args.epochs
    if args.transition_length is not None:
        params["transition_length"] = args.transition_length
    params.setdefault("random_state", args.seed)
    model = TransitionGenerator(topo, **params).initialize()
    for epoch in range(model.epochs):
        model.partial_fit(data.train)
        print(f"epoch {epoch} " + " ".join(f"{v:.6g}" for v in model.history_[-1]), flush=True)
    path = out_path(args, "trans.ckpt")
    model.save(path)
    print(f"saved {path}")


def _point(text: str) -> np.ndarray:
    try:
        x, z = (float(v) for v in text.split(","))
    except ValueError:
        raise ParseError(text, 0, "expected 'x,z'") from None
    return np.array([x, z])


def cmd_plan(args, config):
    _, data = load_clips(args, config)
    index = build_index(data.train)
    plan = sample_subgoals(_point(args.start), _point(args.end), args.segments, index, np.random.default_rng(args.seed))
    print(f"d_min {index.d_min:.6g} d_max {index.d_max:.6g}")
    for l, p in enumerate(plan.points):
        dist = f" {plan.segment_dists[l]:.6g}" if l < len(plan.segment_dists) else ""
        print(f"{l} {p[0]:.6g} {p[1]:.6g}{dist}")


def _generation_config(args, config) -> GenerationConfig:
    keys = {f for f in GenerationConfig.__dataclass_fields__}
    text = "\n".join(f"{k} = {v}" for k, v in config.items() if k in keys)
    defaults = dict(plan_seed=args.seed, style_seed=args.seed, model_seed=args.seed)
    cfg = GenerationConfig.parse(text, args.config or "<config>", **defaults)
    changes = {}
    if args.segments is not None:
        changes["num_segments"] = args.segments
    if args.short is not None:
        changes["short_checkpoint"] = args.short
    if args.long is not None:
        changes["long_checkpoint"] = args.long
    if args.style is not None:
        changes["style_source"] = args.style
    return GenerationConfig(**{**cfg.__dict__, **changes})


def _load_models(cfg: GenerationConfig):
    if cfg.short_checkpoint is None or cfg.long_checkpoint is None:
        raise ParseError("--short/--long", 0, "both model checkpoints are required")
    return StyleTransferAutoencoder.load(cfg.short_checkpoint), TransitionGenerator.load(cfg.long_checkpoint)


def cmd_generate(args, config):
    topo, data = load_clips(args, config)
    cfg = _generation_config(args, config)
    short, long = _load_models(cfg)
    cfg = GenerationConfig(**{**cfg.__dict__, "transition_length": long.transition_length,
                              "clip_length": len(data.train[0])})
    db = MotionDatabase(topo, data.train)
    s_S = state_ref(args.start, topo) if args.start else data.heldout[0].positions[0]
    if args.end:
        s_E = state_ref(args.end, topo)
    else:
        mean = float(np.mean(db.index.distances))
        s_E = s_S + np.array([cfg.num_segments * mean, 0.0, 0.0])
    result = generate(cfg, s_S, s_E, db, short, long)
    paths = export_frames(result, out_path(args, "generated"))
    print(f"{len(result.sequence)} frames; clips {result.clip_ids}; styles {result.style_ids}")
    for p in paths:
        print(f"wrote {p}")


def cmd_interpolate(args, config):
    model = TransitionGenerator.load(args.model)
    topo = model.topology
    if args.length is not None and args.length != model.transition_length:
        raise ParseError("--length", 0, f"model generates {model.transition_length} frames, not {args.length}")
    seq = interpolate(model, state_ref(args.start, topo), state_ref(args.end, topo))
    path = out_path(args, "transition.mseq")
    save_motion(seq, path)
    print(f"wrote {len(seq)} frames to {path}")


def cmd_transfer(args, config):
    model = StyleTransferAutoencoder.load(args.model)
    topo = model.topology
    content = load_motion(args.content, topo)
    style = load_motion(args.style_clip, topo)
    M = model.clip_length_
    if len(content) < M or len(style) < M:
        raise ParseError(args.content, 0, f"content and style need at least {M} frames")
    out = transfer_style(model, make_clip(content[:M], topo), make_clip(style[:M], topo))
    path = out_path(args, "transfer.mseq")
    save_motion(out.seq, path)
    print(f"wrote {len(out)} frames to {path}")


def cmd_eval(args, config):
    _, data = load_clips(args, config)
    short = StyleTransferAutoencoder.load(args.short)
    long = TransitionGenerator.load(args.long)
    report = evaluate(short, long, data.heldout, data.train, seed=args.seed)
    text = report.format()
    if args.out is not None:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def cmd_gradcheck(args, config):
    results = gradcheck_suite(args.seed)
    worst = max(results.values())
    for name, err in results.items():
        print(f"{name} {err:.3e} {'ok' if err < TOLERANCE else 'FAIL'}")
    print(f"max {worst:.3e}")
    if worst >= TOLERANCE:
        raise NonFiniteLoss(f"gradient check failed: max relative error {worst:.3e}")


def cmd_export(args, config):
    seq = load_motion(args.input)
    result = GenerationResult(seq, [Part("sequence", 0, 0, len(seq))], None, {"seed": args.seed})
    for p in export_frames(result, out_path(args, "export"), Path(args.input).stem):
        print(f"wrote {p}")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # suppressed defaults let the flags appear before or after the command
    hide = argparse.SUPPRESS
    common.add_argument("--seed", type=int, default=hide, help="random seed (default 0)")
    common.add_argument("--data", default=hide, help="directory with skeleton.skel and *.mseq sequences")
    common.add_argument("--config", default=hide, help="text file of 'key = value' lines")
    common.add_argument("--out", default=hide, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", default=hide)

    parser = argparse.ArgumentParser(prog="motionsynth", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", parents=[common], help="write the synthetic walker dataset")
    p.add_argument("--spec", help="file with 'walkers K frames T styles S seed X'")
    p.set_defaults(func=cmd_synth_data)

    for name, func in (("train-short", cmd_train_short), ("train-long", cmd_train_long)):
        p = sub.add_parser(name, parents=[common], help=f"train the {name[6:]}-range model")
        p.add_argument("--epochs", type=int)
        if name == "train-long":
            p.add_argument("--transition-length", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("plan", parents=[common], help="sample sub-goals between two ground points")
    p.add_argument("--start", default="0,0", help="x,z")
    p.add_argument("--end", required=True, help="x,z")
    p.add_argument("--segments", type=int, default=3)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", parents=[common], help="synthesize a long motion between two states")
    p.add_argument("--short", help="short-range checkpoint")
    p.add_argument("--long", help="transition checkpoint")
    p.add_argument("--start", help="start state as file.mseq@frame")
    p.add_argument("--end", help="end state as file.mseq@frame")
    p.add_argument("--segments", type=int)
    p.add_argument("--style", help="random, self, none or a style .mseq file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interpolate", parents=[common], help="transition between two states")
    p.add_argument("--model", required=True)
    p.add_argument("--start", required=True, help="file.mseq@frame")
    p.add_argument("--end", required=True, help="file.mseq@frame")
    p.add_argument("--length", type=int)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("transfer", parents=[common], help="render one clip in another clip's style")
    p.add_argument("--model", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--style-clip", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", parents=[common], help="metrics report on the held-out split")
    p.add_argument("--short", required=True)
    p.add_argument("--long", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every graph")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export", parents=[common], help="plain-text joint dump of a .mseq file")
    p.add_argument("input")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    for name, default in (("seed", 0), ("data", None), ("config", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = read_config(args.config)
        args.func(args, config)
    except PlanInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, SkeletonMismatch, CheckpointMismatch, FootJointsUndeclared, EmptyDatabase, EmptyEval,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NonFiniteLoss, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
