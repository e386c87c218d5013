import numpy as np
import pytest

from motionsynth.cli import EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_OK, EXIT_PARSE, main
from motionsynth.pipeline import MetricsReport, load_frame_dump
from motionsynth.skeleton import load_motion

SMALL = """walkers = 3
frames = 240
styles = 2
short.content_channels = 4
short.style_channels = 4
short.fused_channels = 8
short.hidden_channels = 8
long.hidden_size = 8
long.fuse_hidden = 8
long.disc_width = 16
long.disc_blocks = 1
num_segments = 2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL)
    data = root / "data"
    assert main(["synth-data", "--config", str(cfg), "--out", str(data), "--seed", "5"]) == EXIT_OK
    common = ["--data", str(data), "--config", str(cfg)]
    assert main(["train-short", *common, "--epochs", "1", "--out", str(root / "short.ckpt")]) == EXIT_OK
    assert main(["train-long", *common, "--epochs", "1", "--out", str(root / "trans.ckpt")]) == EXIT_OK
    return root, data, cfg, common


def test_synth_data_layout(workspace):
    root, data, _, _ = workspace
    assert (data / "skeleton.skel").exists() and (data / "synth.spec").exists()
    assert len(list(data.glob("*.mseq"))) == 6
    assert "walkers 3 frames 240 styles 2 seed 5" in (data / "synth.spec").read_text()


def test_plan(workspace, capsys):
    _, _, _, common = workspace
    assert main(["plan", *common, "--end", "2,8", "--segments", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("d_min") and len(lines) == 4


def test_infeasible_plan_exit_code(workspace):
    _, _, _, common = workspace
    assert main(["plan", *common, "--start", "0,0", "--end", "0,0", "--segments", "3"]) == EXIT_INFEASIBLE


def test_generate_and_export(workspace):
    root, data, _, common = workspace
    args = ["generate", *common, "--short", str(root / "short.ckpt"), "--long", str(root / "trans.ckpt")]
    assert main([*args, "--out", str(root / "gen_a")]) == EXIT_OK
    assert main([*args, "--out", str(root / "gen_b")]) == EXIT_OK
    files_a = sorted((root / "gen_a").iterdir())
    files_b = sorted((root / "gen_b").iterdir())
    assert len(files_a) == 2
    assert [f.read_bytes() for f in files_a] == [f.read_bytes() for f in files_b]
    seq = load_motion(root / "gen_a" / "generated.mseq")
    assert len(seq) == 2 + 2 * 120 + 3 * 38
    assert main(["export", str(root / "gen_a" / "generated.mseq"), "--out", str(root / "dump")]) == EXIT_OK
    pos, parts = load_frame_dump(root / "dump" / "generated.frames.txt")
    assert np.array_equal(pos, seq.positions) and parts[0].kind == "sequence"


def test_interpolate_and_transfer(workspace):
    root, data, _, _ = workspace
    a, b = sorted(data.glob("*.mseq"))[:2]
    out = root / "t.mseq"
    assert main(["interpolate", "--model", str(root / "trans.ckpt"), "--start", f"{a}@5", "--end", f"{b}@-1",
                 "--length", "40", "--out", str(out)]) == EXIT_OK
    seq = load_motion(out)
    assert len(seq) == 40
    assert np.array_equal(seq.positions[0], load_motion(a).positions[5])
    assert main(["interpolate", "--model", str(root / "trans.ckpt"), "--start", f"{a}@5", "--end", f"{b}@0",
                 "--length", "30"]) == EXIT_PARSE
    assert main(["interpolate", "--model", str(root / "trans.ckpt"), "--start", f"{a}@999", "--end", f"{b}@0"]) \
        == EXIT_PARSE
    assert main(["transfer", "--model", str(root / "short.ckpt"), "--content", str(a), "--style-clip", str(b),
                 "--out", str(root / "x.mseq")]) == EXIT_OK
    assert len(load_motion(root / "x.mseq")) == 120


def test_eval_report(workspace):
    root, _, _, common = workspace
    out = root / "report.txt"
    assert main(["eval", *common, "--short", str(root / "short.ckpt"), "--long", str(root / "trans.ckpt"),
                 "--out", str(out)]) == EXIT_OK
    report = MetricsReport.parse(out.read_text())
    assert "diversity" in report.scalars and "interpolation_mse" in report.curves


def test_config_errors(workspace, tmp_path):
    _, data, _, _ = workspace
    bad = tmp_path / "bad.cfg"
    bad.write_text("short.colour = blue\n")
    assert main(["train-short", "--data", str(data), "--config", str(bad), "--epochs", "1"]) == EXIT_PARSE
    bad.write_text("no equals sign\n")
    assert main(["plan", "--data", str(data), "--config", str(bad), "--end", "1,1"]) == EXIT_PARSE
    assert main(["plan", "--data", str(tmp_path / "missing"), "--end", "1,1"]) == EXIT_PARSE
    assert main(["train-short", "--config", str(tmp_path / "nope.cfg")]) == EXIT_PARSE


def test_numeric_failure_exit_code(workspace, tmp_path):
    _, data, _, _ = workspace
    cfg = tmp_path / "hot.cfg"
    cfg.write_text(SMALL + "short.learning_rate = 1e200\n")
    assert main(["train-short", "--data", str(data), "--config", str(cfg), "--epochs", "3",
                 "--out", str(tmp_path / "x.ckpt")]) == EXIT_NUMERIC


def test_seed_before_command(workspace, tmp_path):
    _, data, cfg, _ = workspace
    assert main(["--seed", "9", "synth-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == EXIT_OK
    assert "seed 9" in (tmp_path / "d" / "synth.spec").read_text()
