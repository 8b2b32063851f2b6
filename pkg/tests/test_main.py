import json
import os
import sys
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from utils import REPO_DIR, data_path, fixture_path

from voltage_control_bench import main as cli
from voltage_control_bench.config import load_run_config

DESK_SCALE = os.path.join(REPO_DIR, "configs", "desk_scale.json")

TINY_RUN = {
    "network": fixture_path("net6.json"),
    "data_seed": 0,
    "seeds": [0],
    "train_episodes": 2,
    "eval_every": 1,
    "eval_episodes": 2,
    "variants": [{"name": "madelc"}, {"name": "maddpg", "algorithm": "maddpg_baseline"}],
    "env": {"train_horizon": 10, "eval_horizon": 20},
    "learner": {"hidden_sizes": [8, 8], "batch_size": 4, "buffer_size": 32, "update_every": 5, "critic_epochs": 1},
    "synth": {"days": 2},
}


def run_cli(*argv):
    with mock.patch.object(sys, "argv", ["vcb", *argv]):
        cli.main()


def write_run_config(tmp_path, name="tiny.json", **changes):
    data = json.loads(json.dumps(TINY_RUN))
    data.update(changes)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_parse_args_run():
    args = cli.parse_args(["run", "--config", "a.json", "--seed", "3", "--set", "learner.tau=0.1", "--dry-run"])
    assert args.subcommand == "run"
    assert args.seed == 3
    assert args.overrides == ["learner.tau=0.1"]
    assert args.dry_run
    assert args.parallel == 1


def test_parse_args_solve_pf_needs_one_source():
    with pytest.raises(SystemExit):
        cli.parse_args(["solve-pf", "--net", "n.json"])
    with pytest.raises(SystemExit):
        cli.parse_args(["solve-pf", "--net", "n.json", "--zero-injections", "--dataset", "d.csv"])


def test_validate_net(capsys):
    run_cli("validate-net", fixture_path("net6.json"))
    out = capsys.readouterr().out
    assert "Buses:" in out and "6" in out
    assert "Z1, Z2" in out


def test_validate_net_rejects_cycle(tmp_path):
    with open(fixture_path("net6.json"), "r") as f:
        spec = json.load(f)
    spec["branches"].append({"from": 2, "to": 5, "r_pu": 0.02, "x_pu": 0.04})
    path = tmp_path / "loop.json"
    path.write_text(json.dumps(spec))
    with pytest.raises(SystemExit) as exc:
        run_cli("validate-net", str(path))
    assert exc.value.code == cli.EXIT_BAD_INPUT


def test_validate_net_missing_file(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli("validate-net", str(tmp_path / "none.json"))
    assert exc.value.code == cli.EXIT_BAD_INPUT


def test_solve_pf_zero_injections(tmp_path):
    out = tmp_path / "pf.csv"
    run_cli("solve-pf", "--net", data_path("star4.json"), "--zero-injections", "--output", str(out))
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["bus", "v", "theta", "p_inj", "q_inj"]
    assert list(frame["bus"]) == [0, 1, 2, 3]
    np.testing.assert_array_equal(frame["v"], 1.0)
    np.testing.assert_array_equal(frame["theta"], 0.0)


def test_make_data_is_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("make-data", "--net", fixture_path("net6.json"), "--days", "1", "--seed", "4", "--output", str(first))
    run_cli("make-data", "--net", fixture_path("net6.json"), "--days", "1", "--seed", "4", "--output", str(second))
    assert first.read_bytes() == second.read_bytes()
    frame = pd.read_csv(first)
    assert len(frame) == 480
    assert frame.columns[0] == "timestamp"


def test_solve_pf_from_generated_dataset(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run_cli("make-data", "--net", fixture_path("net6.json"), "--days", "1", "--output", str(data))
    capsys.readouterr()
    run_cli("solve-pf", "--net", fixture_path("net6.json"), "--dataset", str(data), "--row", "240")
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "bus,v,theta,p_inj,q_inj"
    assert len(lines) == 7


def test_run_missing_dataset_is_bad_input(tmp_path):
    path = write_run_config(tmp_path, dataset=str(tmp_path / "missing.csv"))
    with pytest.raises(SystemExit) as exc:
        run_cli("run", "--config", path, "--out", str(tmp_path / "out"))
    assert exc.value.code == cli.EXIT_BAD_INPUT
    assert not (tmp_path / "out").exists()


def test_run_invalid_config_is_bad_input(tmp_path):
    path = write_run_config(tmp_path, train_episodes=-1)
    with pytest.raises(SystemExit) as exc:
        run_cli("run", "--config", path)
    assert exc.value.code == cli.EXIT_BAD_INPUT


def test_dry_run_prints_plan(tmp_path, capsys):
    path = write_run_config(tmp_path, seeds=[0, 1])
    out_dir = tmp_path / "out"
    run_cli("run", "--config", path, "--out", str(out_dir), "--dry-run")
    printed = capsys.readouterr().out
    cfg = load_run_config(path, out=str(out_dir))
    cells = cli.plan_runs(cfg)
    assert len(cells) == 4
    for _, _, run_id, _ in cells:
        assert run_id in printed
    assert not out_dir.exists()


def test_plan_runs_ids():
    cfg = load_run_config(DESK_SCALE, out="o")
    cells = cli.plan_runs(cfg)
    assert len(cells) == 15
    assert len({run_id for _, _, run_id, _ in cells}) == 15
    other = load_run_config(
        DESK_SCALE, ["learner.tau=0.5"], out="o"
    )
    assert cli.plan_runs(other)[0][2] != cells[0][2]


def test_tiny_run_end_to_end(tmp_path):
    out_dir = tmp_path / "out"
    run_cli("run", "--config", write_run_config(tmp_path), "--out", str(out_dir), "--disable-tqdm")
    runs = pd.read_csv(out_dir / "runs.csv")
    assert sorted(runs["variant"]) == ["maddpg", "madelc"]
    assert set(runs["status"]) == {"ok"}
    for run_id in runs["run_id"]:
        run_dir = out_dir / run_id
        metrics = pd.read_csv(run_dir / "metrics.csv")
        assert sorted(set(metrics["eval_index"])) == [0, 1, 2]
        assert len(metrics) == 6
        assert metrics["cr"].between(0, 1).all()
        assert (run_dir / "checkpoints" / "final.npz").is_file()
        assert (run_dir / "checkpoints" / "eval_0002.npz").is_file()
        assert json.loads((run_dir / "run.json").read_text())["status"] == "ok"
    madelc_dir = out_dir / runs.loc[runs["variant"] == "madelc", "run_id"].iloc[0]
    maddpg_dir = out_dir / runs.loc[runs["variant"] == "maddpg", "run_id"].iloc[0]
    assert list(pd.read_csv(madelc_dir / "traces.csv").columns) == [
        "update",
        "loss_r",
        "loss_c",
        "loss_est",
        "loss_pi",
        "alpha",
    ]
    assert list(pd.read_csv(maddpg_dir / "traces.csv").columns) == ["update", "loss_r", "loss_pi"]
    summary = pd.read_csv(out_dir / "summary.csv")
    assert sorted(summary["variant"]) == ["maddpg", "madelc"]


def test_zero_episodes_only_initial_eval(tmp_path):
    out_dir = tmp_path / "out"
    path = write_run_config(tmp_path, train_episodes=0, variants=[{"name": "madelc"}])
    run_cli("run", "--config", path, "--out", str(out_dir), "--disable-tqdm")
    (run_id,) = pd.read_csv(out_dir / "runs.csv")["run_id"]
    metrics = pd.read_csv(out_dir / run_id / "metrics.csv")
    assert set(metrics["eval_index"]) == {0}
    assert set(metrics["train_episode"]) == {0}
    assert len(pd.read_csv(out_dir / run_id / "traces.csv")) == 0


def test_runs_are_reproducible(tmp_path):
    path = write_run_config(tmp_path, variants=[{"name": "madelc"}], reference_policies=["zero", "random"])
    first, second = tmp_path / "first", tmp_path / "second"
    run_cli("run", "--config", path, "--out", str(first), "--disable-tqdm")
    run_cli("run", "--config", path, "--out", str(second), "--disable-tqdm")
    (run_id,) = pd.read_csv(first / "runs.csv")["run_id"]
    for name in ("metrics.csv", "traces.csv", "reference.csv"):
        assert (first / run_id / name).read_bytes() == (second / run_id / name).read_bytes()
