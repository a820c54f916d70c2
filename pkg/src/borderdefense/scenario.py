"""Scenario files: TOML (or JSON) documents holding every run parameter.

Sections: ``game``, ``defenders`` (array of tables, each optionally with a
``count``), ``reward``, ``train`` and ``eval``.  Unknown keys are rejected.
Missing values fall back to the default 1v1 game.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import ConfigError, DefenderSpec, GameConfig, Mode
from .learn import TrainConfig

SECTIONS = {"game", "defenders", "reward", "train", "eval"}
GAME_KEYS = {"attacker_speed", "attacker_spawn", "defender_spawn", "dt", "max_steps", "seed",
             "capture_tolerance", "domain"}
DEFENDER_KEYS = {"speed", "sensing_radius", "capture_radius", "can_capture", "count"}
REWARD_KEYS = {"mode", "gamma"}
EVAL_KEYS = {"episodes", "seed", "stochastic"}
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"gamma"}


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    game: GameConfig = field(default_factory=GameConfig.benchmark)
    mode: Mode = Mode.GT_ASSISTED
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_episodes: int = 1000
    eval_seed: Optional[int] = None
    eval_stochastic: bool = False

    def to_dict(self) -> dict:
        """Fully resolved document; loading it back yields an equal scenario."""
        g = self.game
        return {
            "game": {
                "domain": [[0.0, 1.0], [0.0, 1.0]],
                "attacker_speed": g.attacker_speed,
                "attacker_spawn": [list(r) for r in g.attacker_spawn],
                "defender_spawn": [list(r) for r in g.defender_spawn],
                "dt": g.dt,
                "max_steps": g.max_steps,
                "seed": g.seed,
                "capture_tolerance": g.capture_tolerance,
            },
            "defenders": [dataclasses.asdict(d) for d in g.defenders],
            "reward": {"mode": self.mode.value, "gamma": self.train.gamma},
            "train": {k: v for k, v in dataclasses.asdict(self.train).items() if k != "gamma"},
            "eval": {"episodes": self.eval_episodes, "seed": self.eval_seed,
                     "stochastic": self.eval_stochastic},
        }


def _check_keys(section: str, got: dict, allowed: set) -> None:
    if not isinstance(got, dict):
        raise ScenarioError(f"[{section}] must be a table")
    unknown = set(got) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    _check_keys("scenario", doc, SECTIONS)
    game = dict(doc.get("game", {}))
    _check_keys("game", game, GAME_KEYS)
    domain = game.pop("domain", [[0.0, 1.0], [0.0, 1.0]])
    if [list(map(float, r)) for r in domain] != [[0.0, 1.0], [0.0, 1.0]]:
        raise ScenarioError("the domain is fixed to [0,1] x [0,1]")

    raw_defs = doc.get("defenders")
    if raw_defs is None:
        defenders = GameConfig.benchmark().defenders
    else:
        if not isinstance(raw_defs, list) or not raw_defs:
            raise ScenarioError("[[defenders]] must be a non-empty array of tables")
        defenders = []
        for k, d in enumerate(raw_defs):
            _check_keys(f"defenders.{k}", d, DEFENDER_KEYS)
            d = dict(d)
            count = d.pop("count", 1)
            if not isinstance(count, int) or count < 1:
                raise ScenarioError("defender count must be a positive integer")
            defenders.extend([DefenderSpec(**d)] * count)

    reward = doc.get("reward", {})
    _check_keys("reward", reward, REWARD_KEYS)
    train = doc.get("train", {})
    _check_keys("train", train, TRAIN_KEYS)
    ev = doc.get("eval", {})
    _check_keys("eval", ev, EVAL_KEYS)

    try:
        if "max_steps" not in game:
            v_a = game.get("attacker_speed", 0.1)
            dt = game.get("dt", 0.05)
            game["max_steps"] = int(round(2.0 / (v_a * dt)))
        cfg = GameConfig(defenders=tuple(defenders), **game)
        mode = Mode.parse(reward.get("mode", "gt"))
        tcfg = TrainConfig(gamma=reward.get("gamma", 0.99), **train)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc
    episodes = ev.get("episodes", 1000)
    if not isinstance(episodes, int) or episodes < 0:
        raise ScenarioError("eval.episodes must be a non-negative integer")
    return Scenario(cfg, mode, tcfg, episodes, ev.get("seed"), bool(ev.get("stochastic", False)))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    # run-directory echoes wrap the scenario with provenance fields
    if "scenario" in doc and isinstance(doc["scenario"], dict):
        doc = doc["scenario"]
    return scenario_from_dict(doc)
