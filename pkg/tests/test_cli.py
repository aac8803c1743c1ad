import json
import os

import numpy as np
import pytest
import yaml

from striderl.cli import dispatch
from striderl.configs import (
    ConfigError,
    config_hash,
    load_bundle,
    merge_section,
    write_default_bundle,
)


def test_version_flag(capsys):
    assert dispatch(["--version"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("striderl ")


def test_version_json(capsys):
    assert dispatch(["--version", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["name"] == "striderl"


def test_no_command_prints_help(capsys):
    assert dispatch([]) == 2
    assert "usage" in capsys.readouterr().out.lower()


def test_unknown_flag_is_usage_error(capsys):
    assert dispatch(["train", "--nonsense"]) == 2


def test_invalid_config_returns_3(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema: striderl/train@1\nnot_a_key: 5\n")
    code = dispatch(["train", "--config", str(bad), "--dry-run"])
    assert code == 3
    assert "unknown config key" in capsys.readouterr().err


def test_dry_run_validates_and_exits_zero(tmp_path, capsys):
    cfg = tmp_path / "ok.yaml"
    cfg.write_text("schema: striderl/train@1\nseed: 7\nnum_envs: 2\n"
                   "rollout_steps: 4\nminibatches: 2\ntotal_steps: 16\n")
    assert dispatch(["train", "--config", str(cfg), "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out
    assert "(file)" in out  # provenance printed at startup


def test_set_override_and_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "ok.yaml"
    cfg.write_text("schema: striderl/train@1\nseed: 1\n")
    monkeypatch.setenv("STRIDERL_TRAIN", '{"seed": 2}')
    code = dispatch(["train", "--config", str(cfg), "--set", "train.seed=3", "--dry-run"])
    assert code == 0
    out = capsys.readouterr().out
    assert "train.seed <- --set" in out


def test_set_rejects_unknown_key(capsys):
    assert dispatch(["train", "--set", "train.bogus=1", "--dry-run"]) == 3


def test_train_smoke_and_inspect_and_replay(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code = dispatch([
        "train", "--out", str(out_dir),
        "--set", "train.task=pendulum",
        "--set", "train.num_envs=2",
        "--set", "train.rollout_steps=4",
        "--set", "train.minibatches=2",
        "--set", "train.total_steps=16",
    ])
    assert code == 0
    assert (out_dir / "metrics.csv").exists()
    assert (out_dir / "ckpt_final.npz").exists()


@pytest.fixture(scope="module")
def biped_checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = dispatch([
        "train", "--out", str(out),
        "--set", "train.num_envs=2",
        "--set", "train.rollout_steps=4",
        "--set", "train.minibatches=2",
        "--set", "train.total_steps=8",
        "--set", "env.max_episode_steps=40",
    ])
    assert code == 0
    return str(out / "ckpt_final.npz")


def test_eval_writes_report(biped_checkpoint, tmp_path, capsys):
    out = tmp_path / "eval"
    code = dispatch([
        "eval", "--checkpoint", biped_checkpoint, "--grid", "0,0,0",
        "--episodes", "1", "--out", str(out), "--traj",
    ])
    assert code == 0
    report = (out / "eval_report.csv").read_text().splitlines()
    assert report[0].startswith("cmd_vx,cmd_vy,cmd_wz")
    assert len(report) == 2
    assert (out / "cell_00.traj").exists()


def test_inspect_rewards_19_columns(biped_checkpoint, tmp_path):
    out = tmp_path / "eval"
    dispatch(["eval", "--checkpoint", biped_checkpoint, "--grid", "0,0,0",
              "--episodes", "1", "--out", str(out), "--traj"])
    csv_out = tmp_path / "rewards.csv"
    code = dispatch(["inspect-rewards", "--log", str(out / "cell_00.traj"),
                     "--out", str(csv_out)])
    assert code == 0
    lines = csv_out.read_text().splitlines()
    header = lines[0].split(",")
    assert len(header) == 19
    assert header[0] == "time" and header[1] == "r1" and header[-1] == "total"
    assert all(len(line.split(",")) == 19 for line in lines[1:])


def test_replay_subcommand(biped_checkpoint, tmp_path, capsys):
    out = tmp_path / "eval"
    dispatch(["eval", "--checkpoint", biped_checkpoint, "--grid", "0,0,0",
              "--episodes", "1", "--out", str(out), "--traj"])
    code = dispatch(["replay", "--log", str(out / "cell_00.traj")])
    assert code == 0
    assert "replay ok" in capsys.readouterr().out


def test_bench_subcommand(tmp_path, capsys):
    report_path = tmp_path / "bench.json"
    code = dispatch(["bench", "--envs", "4", "--steps", "5", "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["env_steps"] == 20
    assert report["env_steps_per_s"] > 0


def test_missing_checkpoint_one_line_error(capsys):
    code = dispatch(["eval", "--checkpoint", "/nonexistent.npz"])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and err.count("\n") == 1


# ------------------------------------------------------------------ configs

def test_default_bundle_roundtrip(tmp_path):
    path = tmp_path / "bundle.yaml"
    write_default_bundle(path)
    sections = load_bundle(path)
    assert set(sections) == {"model", "env", "rewards", "train"}
    assert sections["rewards"]["w17"] == 100.0
    assert sections["env"]["commands"]["vx"] == [-0.3, 1.0]


def test_config_hash_stable_and_sensitive():
    a = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
    b = {k: merge_section(k, None) for k in ("model", "env", "rewards", "train")}
    assert config_hash(a) == config_hash(b)
    b["train"]["seed"] = 999
    assert config_hash(a) != config_hash(b)


def test_bundle_rejects_unknown_sections(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema: striderl/bundle@1\nwalrus: {}\n")
    with pytest.raises(ConfigError):
        load_bundle(path)


def test_wrong_schema_id_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema: striderl/model@99\n")
    with pytest.raises(ConfigError):
        load_bundle(path)
