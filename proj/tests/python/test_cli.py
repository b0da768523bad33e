import os
import subprocess
from pathlib import Path

import pytest

import srn

CLI = os.environ.get("SRN_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="SRN_CLI not set")

SMALL = "\n".join([
    "conv_widths=4,8,16", "d_model=16", "backbone_units=1", "backbone_heads=4",
    "backbone_ff=32", "gsrm_units=1", "gsrm_heads=4", "gsrm_ff=32",
    "warmup_epochs=1", "joint_epochs=1", "data_count=100", "lexicon_size=10", "",
])


def run(*args, check=True):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, check=check)


def test_pipeline(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    data = tmp_path / "data"
    run("gen-data", "--config", cfg, "--out", data)
    assert (data / "charset.txt").read_text().split() == list("acehilnorstu")
    first = (data / "train.tsv").read_text().splitlines()[0]
    rel, word = first.split("\t")
    assert (data / rel).exists()

    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    for out in (out1, out2):
        run("train", "--config", cfg, "--data", data, "--seed", 5, "--fusion", "add", "--out", out)
    log = (out1 / "metrics.log").read_text()
    assert log == (out2 / "metrics.log").read_text()
    assert log.startswith("epoch 1 L_e ")
    assert (out1 / "model.ckpt").read_bytes()[:8] == b"SRNCKPT1"
    assert "fusion=add" in (out1 / "config.txt").read_text()

    res = run("eval", "--checkpoint", out1 / "model.ckpt", "--data", data, "--split", "test")
    assert "word_accuracy" in res.stdout

    image = data / rel
    maps = tmp_path / "maps"
    res = run("infer", "--checkpoint", out1 / "model.ckpt", "--image", image,
              "--dump-attention", "--out", maps)
    text = res.stdout.split("\n")[0]
    assert set(text) <= set("acehilnorstu")
    dumped = sorted(p.name for p in maps.glob("attention_*.pgm")) if maps.exists() else []
    assert dumped == sorted(f"attention_{t}.pgm" for t in range(len(text)))

    res = run("benchmark", "--checkpoint", out1 / "model.ckpt", "--lengths", "4,6",
              "--repetitions", 3, "--out", tmp_path)
    assert "ratio" in (tmp_path / "latency.txt").read_text()


def test_grad_check_subcommand():
    res = run("grad-check", "--instances", 3, "--module", "pvam", "--module", "serial")
    assert res.returncode == 0
    assert res.stdout.count("PASS") == 2


def test_unknown_config_key_is_an_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n")
    res = run("train", "--config", cfg, "--out", tmp_path / "o", check=False)
    assert res.returncode == 2
    assert "unknown config key" in res.stderr


def test_bad_decoder_flag_is_rejected(tmp_path):
    res = run("train", "--decoder", "ctc", "--out", tmp_path / "o", check=False)
    assert res.returncode != 0
