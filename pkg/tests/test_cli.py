import re

import numpy as np
import pytest

from spatialfuse import cli, container
from spatialfuse.checks import OP_CASES
from spatialfuse.model import ModelConfig, init_model

SMALL = ["--set", "c=16", "--set", "heads=2", "--set", "layers=1"]


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert cli.main(["gen-data", "--seeds", "0:1", "--out", str(root), "--set", "world=clean"]) == 0
    return root


def test_usage_errors(capsys):
    assert cli.main([]) == 2
    assert cli.main(["fly"]) == 2
    assert cli.main(["train", "--set", "bogus=1"]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_gen_data_empty_range(tmp_path):
    assert cli.main(["gen-data", "--seeds", "3:3", "--out", str(tmp_path)]) == 2
    assert cli.main(["gen-data", "--seeds", "nonsense", "--out", str(tmp_path)]) == 2


def test_gen_data_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["gen-data", "--seeds", "0:1", "--out", str(blocker / "sub")]) == 2


def test_gen_data_output(tiny_data):
    d = tiny_data / "episode_000000"
    arrays = container.load(d / "data.sfse")
    assert sorted(arrays) == ["bev", "camera", "goal", "waypoints"]
    n = len(arrays["camera"])
    assert n > 0 and arrays["waypoints"].shape == (n, 4, 2)
    assert len((d / "manifest.txt").read_text().splitlines()) == n + 1


def test_train_missing_data(tmp_path):
    assert cli.main(["train", "--set", f"data_dir={tmp_path / 'none'}", "--out", str(tmp_path)]) == 2


def test_train_rejects_optimizer(tiny_data, tmp_path):
    args = ["train", "--set", f"data_dir={tiny_data}", "--set", "optimizer=sgd", "--out", str(tmp_path)]
    assert cli.main(args) == 2


def test_train_writes_checkpoints_and_log(tiny_data, tmp_path, capsys):
    args = ["train", "--set", f"data_dir={tiny_data}", "--set", "steps=3", "--set", "log_every=1",
            "--out", str(tmp_path)] + SMALL
    assert cli.main(args) == 0
    out = capsys.readouterr().out
    assert re.search(r"frames=\d+ initial_loss=[\d.]+", out)
    assert re.search(r"ratio=[\d.]+", out)
    log = (tmp_path / "loss.log").read_text().splitlines()
    assert [l.split()[0] for l in log[:3]] == ["step=1", "step=2", "step=3"]
    for name in ("best.sfse", "final.sfse"):
        assert "global.w" in container.load(tmp_path / name)


def test_eval_expert_clean(tmp_path, capsys):
    assert cli.main(["eval", "--expert", "--seeds", "0:2", "--set", "world=clean", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    agg = [l for l in out if l.startswith("AGG")]
    assert len(agg) == 1
    ds = float(re.search(r"ds=([\d.]+)", agg[0]).group(1))
    assert ds >= 99
    per = [float(re.search(r"ds=([\d.]+)", l).group(1)) for l in out if l.startswith("episode=")]
    assert abs(np.mean(per) - ds) <= 1e-4  # printed to 4 decimals
    report = (tmp_path / "eval_expert_0_2.txt").read_text().splitlines()
    assert report == out


def test_eval_errors(tmp_path, capsys):
    assert cli.main(["eval", "--expert", "--seeds", "5:2", "--out", str(tmp_path)]) == 2
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "missing.sfse"), "--seeds", "0:1"]) == 2
    ck = tmp_path / "ck.sfse"
    params = init_model(ModelConfig(), 0)
    cli.save_checkpoint(params, ck)
    ck.write_bytes(ck.read_bytes()[:-10])
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(ck), "--seeds", "0:1", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "offset" in err and repr(max(params)) in err


@pytest.mark.slow
def test_gradcheck_fault_names_matmul(capsys):
    assert cli.main(["gradcheck", "--fault", "matmul"]) == 1
    out = capsys.readouterr().out.splitlines()
    assert out[-1].startswith("failed:") and "matmul" in out[-1].split()
    reported = [l.split()[0] for l in out[:-1]]
    assert sorted(reported) == sorted(list(OP_CASES) + ["end_to_end"])
    assert len(set(reported)) == len(reported)
