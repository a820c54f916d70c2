import json
from pathlib import Path

import pytest

from borderdefense import cli
from borderdefense.engine import Terminal
from borderdefense.scenario import ScenarioError, load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

TINY_TRAIN = """
[train]
frames_per_batch = 64
minibatch_size = 32
epochs = 1
n_envs = 4
hidden = 8
eval_interval = 2
total_frames = 128
"""


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TRAIN + "\n[eval]\nepisodes = 5\nseed = 3\n")
    return path


# ---------------------------------------------------------------- solve


def test_solve_reference_value(capsys):
    code, out, _ = run(capsys, "solve", "--attacker", "0.5,0.95", "--defender", "0.5,0.05,3.33", "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["payoff"] == pytest.approx(0.7421, abs=1e-4)
    assert len(doc["circles"]) == 1


def test_solve_coincident(capsys):
    _, out, _ = run(capsys, "solve", "--attacker", "0.4,0.6", "--defender", "0.4,0.6,2", "--json")
    assert json.loads(out)["payoff"] == pytest.approx(0.6)


def test_solve_check_two_defenders(capsys):
    _, out, _ = run(capsys, "solve", "--attacker", "0.5,0.8", "--defender", "0.2,0.3,3",
                    "--defender", "0.8,0.4,2.5", "--check", "--json")
    assert json.loads(out)["oracle_difference"] <= 1e-3


@pytest.mark.parametrize("argv", [
    ["solve", "--attacker", "0.5,0.5", "--defender", "0.5,0.1,1.0"],
    ["solve", "--attacker", "0.5,0.5"],
    ["solve", "--attacker", "0.5", "--defender", "0.5,0.1,3"],
    ["solve"],
    ["frobnicate"],
])
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == cli.EXIT_USAGE


# ---------------------------------------------------------------- scenarios


def test_shipped_scenarios_load():
    one, three = load_scenario(SCENARIOS / "1v1.toml"), load_scenario(SCENARIOS / "3v1.toml")
    assert one.game.n_defenders == 1 and one.game.defenders[0].sensing_radius == 0.3
    assert three.game.n_defenders == 3 and three.game.defenders[0].sensing_radius == 0.15


def test_unknown_key_is_schema_error(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[game]\ndt = 0.05\nwarp = 9\n")
    with pytest.raises(ScenarioError, match="warp"):
        load_scenario(bad)
    code, _, err = run(capsys, "simulate", "--scenario", bad, "--out", tmp_path / "o", "--seed", "1")
    assert code == cli.EXIT_SCHEMA and "warp" in err


def test_echo_reloads_to_same_scenario(tmp_path, capsys, tiny):
    run(capsys, "simulate", "--scenario", tiny, "--out", tmp_path / "o", "--seed", "1")
    echo = tmp_path / "o" / "config.json"
    assert load_scenario(echo).to_dict() == load_scenario(tiny).to_dict()


# ---------------------------------------------------------------- simulate


def test_simulate_writes_traces_and_summary(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", SCENARIOS / "1v1.toml", "--episodes", "3",
                       "--seed", "4", "--out", tmp_path)
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "traces").iterdir()) == \
        ["episode_00000.jsonl", "episode_00001.jsonl", "episode_00002.jsonl"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["seed"] == 4 and summary["seed_source"] == "cli"
    assert summary["saved_steps_estimate"] == pytest.approx(19.7, abs=0.05)
    for ep in summary["episodes"]:
        assert ep["terminal"] in (Terminal.SENSED.value, Terminal.BREACHED.value, Terminal.TIMEOUT.value)


def test_simulate_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "simulate", "--scenario", SCENARIOS / "3v1.toml", "--mode", "standard",
            "--search", "up", "--episodes", "2", "--seed", "9", "--out", tmp_path / d)
    for name in ("traces/episode_00000.jsonl", "traces/episode_00001.jsonl", "summary.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_entropy_seed_is_recorded(tmp_path, capsys):
    bare = tmp_path / "bare.toml"
    bare.write_text("[reward]\nmode = \"gt\"\n")
    code, out, _ = run(capsys, "simulate", "--scenario", bare, "--out", tmp_path)
    seed = json.loads((tmp_path / "summary.json").read_text())["seed"]
    assert code == 0 and f"seed: {seed} (entropy)" in out


def test_simulate_checkpoint_without_path(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--scenario", SCENARIOS / "1v1.toml", "--policy", "checkpoint",
                       "--out", tmp_path, "--seed", "0")
    assert code == cli.EXIT_USAGE and "--checkpoint" in err


def test_out_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env_out"))
    code, _, _ = run(capsys, "simulate", "--scenario", SCENARIOS / "1v1.toml", "--seed", "0")
    assert code == 0 and (tmp_path / "env_out" / "summary.json").exists()


def test_missing_out(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    code, _, _ = run(capsys, "simulate", "--scenario", SCENARIOS / "1v1.toml", "--seed", "0")
    assert code == cli.EXIT_USAGE


# ---------------------------------------------------------------- train / evaluate


def test_train_fan_out_and_determinism(tmp_path, capsys, tiny):
    for d in ("a", "b"):
        code, _, _ = run(capsys, "train", "--scenario", tiny, "--seeds", "0,1", "--frames", "1024",
                         "--out", tmp_path / d)
        assert code == 0
    for seed in (0, 1):
        a, b = tmp_path / "a" / f"seed_{seed}", tmp_path / "b" / f"seed_{seed}"
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
        assert (a / "config.json").read_bytes() == (b / "config.json").read_bytes()
        assert len(list((a / "checkpoints").iterdir())) == 8
    assert (tmp_path / "a" / "seed_0" / "metrics.csv").read_bytes() != \
        (tmp_path / "a" / "seed_1" / "metrics.csv").read_bytes()


def test_train_mode_only_changes_reward_echo(tmp_path, capsys, tiny):
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--mode", "gt", "--out", tmp_path / "g")
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--mode", "standard", "--out", tmp_path / "s")
    g = json.loads((tmp_path / "g" / "seed_0" / "config.json").read_text())
    s = json.loads((tmp_path / "s" / "seed_0" / "config.json").read_text())
    assert g["scenario"]["reward"]["mode"] == "gt" and s["scenario"]["reward"]["mode"] == "standard"
    for doc in (g, s):
        doc["scenario"].pop("reward")
        doc.pop("mode")
    assert g == s


def test_train_resume_continues_frames(tmp_path, capsys, tiny):
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--out", tmp_path / "r")
    ckpt = tmp_path / "r" / "seed_0" / "checkpoints" / "ckpt_000000128.pt"
    code, _, _ = run(capsys, "train", "--scenario", tiny, "--seed", "0", "--frames", "256",
                     "--resume", ckpt, "--out", tmp_path / "r")
    assert code == 0
    rows = (tmp_path / "r" / "seed_0" / "metrics.csv").read_text().splitlines()[1:]
    frames = [int(r.split(",")[1]) for r in rows]
    assert frames == sorted(frames) and frames[-1] == 256


def test_evaluate_and_compare(tmp_path, capsys, tiny):
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--out", tmp_path / "t")
    ckpt = tmp_path / "t" / "seed_0" / "checkpoints" / "ckpt_000000128.pt"
    code, out, _ = run(capsys, "evaluate", "--checkpoint", ckpt, "--scenario", tiny, "--out", tmp_path / "e",
                       "--json")
    assert code == 0 and json.loads(out)["episodes"] == 5
    report = tmp_path / "e" / "report.json"
    code, out, _ = run(capsys, "evaluate", "--checkpoint", ckpt, "--scenario", tiny, "--out", tmp_path / "e2",
                       "--compare", report, "--json")
    cmp = json.loads(out)["comparison"]
    assert cmp["mean_reward"]["delta"] == 0.0 and cmp["sensing_rate"]["delta"] == 0.0
    assert (tmp_path / "e2" / "report.csv").read_bytes() == (tmp_path / "e" / "report.csv").read_bytes()


def test_evaluate_zero_episodes(tmp_path, capsys, tiny):
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--out", tmp_path / "t")
    ckpt = tmp_path / "t" / "seed_0" / "checkpoints" / "ckpt_000000128.pt"
    code, out, _ = run(capsys, "evaluate", "--checkpoint", ckpt, "--scenario", tiny, "--episodes", "0",
                       "--out", tmp_path / "e", "--json")
    assert code == 0 and json.loads(out)["sensing_rate"] is None


def test_evaluate_incompatible_checkpoint(tmp_path, capsys, tiny):
    run(capsys, "train", "--scenario", tiny, "--seed", "0", "--out", tmp_path / "t")
    ckpt = tmp_path / "t" / "seed_0" / "checkpoints" / "ckpt_000000128.pt"
    code, _, err = run(capsys, "evaluate", "--checkpoint", ckpt, "--scenario", SCENARIOS / "3v1.toml",
                       "--episodes", "1", "--out", tmp_path / "e")
    assert code == cli.EXIT_USAGE and "defenders" in err


def test_evaluate_bad_checkpoint(tmp_path, capsys, tiny):
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"\x00")
    code, _, _ = run(capsys, "evaluate", "--checkpoint", junk, "--scenario", tiny, "--out", tmp_path / "e")
    assert code == cli.EXIT_SCHEMA


# ---------------------------------------------------------------- landscape


def test_landscape(tmp_path, capsys):
    out = tmp_path / "land.csv"
    code, _, _ = run(capsys, "landscape", "--attacker", "0.5,0.7", "--defender", "0.3,0.3,3.33",
                     "--nu", "3.33", "--resolution", "6,4", "--out", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# x") and lines[1].startswith("# y") and len(lines) == 6
