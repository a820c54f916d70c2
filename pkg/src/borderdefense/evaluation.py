"""Evaluation harness: sensing rates, payoff distributions, comparisons, landscapes."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import engine, geometry
from .engine import GameConfig, Mode

EVAL_FIELDS = ("episode", "terminal", "reward", "length", "sensed", "sensing_step", "nash_at_sensing")


@dataclass(frozen=True)
class EpisodeSummary:
    episode: int
    terminal: str
    reward: float
    length: int
    sensed: bool
    sensing_step: Optional[int]
    nash_at_sensing: Optional[float]


@dataclass
class EvalReport:
    """Aggregates over ``records``; statistics are ``None`` when undefined."""

    mode: str
    episodes: int
    sensing_rate: Optional[float]
    mean_reward: Optional[float]
    median_reward: Optional[float]
    std_reward: Optional[float]
    mean_length: Optional[float]
    nash_payoffs: list[float]
    median_nash: Optional[float]
    mean_nash: Optional[float]
    records: list[EpisodeSummary] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Sequence[EpisodeSummary], mode: Mode | str,
                     config: Optional[dict] = None) -> "EvalReport":
        records = sorted(records, key=lambda r: r.episode)
        n = len(records)
        rewards = np.array([r.reward for r in records], dtype=float)
        nash = [r.nash_at_sensing for r in records if r.sensed and r.nash_at_sensing is not None]

        def stat(fn, xs):
            return float(fn(xs)) if len(xs) else None

        return cls(
            mode=Mode.parse(mode).value,
            episodes=n,
            sensing_rate=stat(np.mean, [r.sensed for r in records]),
            mean_reward=stat(np.mean, rewards),
            median_reward=stat(np.median, rewards),
            std_reward=stat(np.std, rewards),
            mean_length=stat(np.mean, [r.length for r in records]),
            nash_payoffs=nash,
            median_nash=stat(np.median, nash),
            mean_nash=stat(np.mean, nash),
            records=list(records),
            config=dict(config or {}),
        )

    def cumulative_mean_reward(self) -> list[float]:
        """Running mean of terminal reward versus episode index."""
        r = np.array([x.reward for x in self.records], dtype=float)
        return (np.cumsum(r) / np.arange(1, r.size + 1)).tolist() if r.size else []

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [asdict(r) for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["records"] = [EpisodeSummary(**r) for r in d.get("records", [])]
        return cls(**d)

    def write(self, path_json, path_csv=None) -> None:
        Path(path_json).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
        if path_csv is not None:
            with open(path_csv, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(EVAL_FIELDS + ("cumulative_mean_reward",))
                for rec, cum in zip(self.records, self.cumulative_mean_reward()):
                    row = asdict(rec)
                    w.writerow([_cell(row[k]) for k in EVAL_FIELDS] + [repr(cum)])

    @classmethod
    def read(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def summarize(rec: engine.EpisodeRecord, index: int) -> EpisodeSummary:
    return EpisodeSummary(index, rec.terminal.value, float(rec.payoff), rec.length, rec.sensed,
                          rec.sensing_step, rec.nash_at_sensing if rec.sensed else None)


def evaluate(policy: engine.DefenderPolicy | Callable, config: GameConfig, mode: Mode | str,
             n_episodes: int = 1000, seed: int = 0, config_echo: Optional[dict] = None) -> EvalReport:
    """Play ``n_episodes`` episodes; episode ``k`` spawns from ``default_rng([seed, k])``.

    ``policy`` is an engine defender policy; for a trained network wrap it
    with :func:`borderdefense.learn.policy_controls` (deterministic mean
    actions by default).  The equilibrium payoff at sensing is recorded for
    every sensed episode, whatever the mode.
    """
    mode = Mode.parse(mode)
    records = []
    for k in range(int(n_episodes)):
        rec = engine.run_episode(config, policy, mode, np.random.default_rng([seed, k]))
        records.append(summarize(rec, k))
    return EvalReport.from_records(records, mode, config_echo)


def evaluate_checkpoint(path, config: GameConfig, mode: Mode | str, n_episodes: int = 1000,
                        seed: int = 0, stochastic: bool = False, config_echo: Optional[dict] = None) -> EvalReport:
    from .learn import load_checkpoint, policy_controls
    from .env import obs_dim

    learner, _ = load_checkpoint(path)
    pol = learner.policy
    if pol.n_agents != config.n_defenders or pol.obs_size != obs_dim(config):
        raise ValueError(f"checkpoint {path} expects {pol.n_agents} defenders, "
                         f"scenario has {config.n_defenders}")
    controls = policy_controls(pol, deterministic=not stochastic, rng=np.random.default_rng([seed, 1]))
    return evaluate(controls, config, mode, n_episodes, seed, config_echo)


def _delta(a, b):
    return None if a is None or b is None else a - b


def _ratio(a, b):
    return None if a is None or b is None or b == 0 else a / b


def compare(report_a: EvalReport, report_b: EvalReport) -> dict:
    """Differences ``a - b`` and ratios ``a / b`` of the headline statistics."""
    out = {"episodes": (report_a.episodes, report_b.episodes), "warnings": []}
    if report_a.episodes != report_b.episodes:
        out["warnings"].append("episode counts differ")
    if report_a.config and report_b.config and _game(report_a.config) != _game(report_b.config):
        out["warnings"].append("game configurations differ")
    for key in ("sensing_rate", "mean_reward", "median_nash", "mean_nash", "mean_length"):
        a, b = getattr(report_a, key), getattr(report_b, key)
        out[key] = {"a": a, "b": b, "delta": _delta(a, b), "ratio": _ratio(a, b)}
    return out


def _game(cfg: dict):
    return cfg.get("game", cfg), cfg.get("defenders")


def landscape_report(fixed: geometry.PursuitConfig, varying_nu: float, path,
                     x_range=(0.0, 1.0), y_range=(0.0, 1.0), resolution=50) -> geometry.Landscape:
    """Write a payoff landscape as CSV with a two-line axis header.

    Line 1 holds the x cell centres, line 2 the y cell centres, then one row
    of payoffs per y value.  Failed cells are written as ``nan``.
    """
    land = geometry.payoff_landscape(fixed, varying_nu, x_range, y_range, resolution)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# x"] + [repr(float(x)) for x in land.xs])
        w.writerow(["# y"] + [repr(float(y)) for y in land.ys])
        for row in land.values:
            w.writerow([repr(float(v)) for v in row])
    return land


def read_landscape(path) -> geometry.Landscape:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    xs = np.array([float(v) for v in rows[0][1:]])
    ys = np.array([float(v) for v in rows[1][1:]])
    values = np.array([[float(v) for v in r] for r in rows[2:]]).reshape(len(ys), len(xs))
    return geometry.Landscape(xs, ys, values)


def gt_identity_gap(report: EvalReport) -> float:
    """|mean reward - sensing_rate * mean Nash payoff over sensed episodes| for a GT report.

    A sensed episode without any capture-capable defender counts as payoff 0.
    """
    if not report.episodes:
        return 0.0
    sensed = [r.nash_at_sensing or 0.0 for r in report.records if r.sensed]
    mean_nash = float(np.mean(sensed)) if sensed else 0.0
    return abs(report.mean_reward - report.sensing_rate * mean_nash)
