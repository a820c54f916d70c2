"""Dec-POMDP layer: observations, action decoding, rewards and a batched env."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine
from .engine import GameConfig, GameState, Mode, Phase, StepOutcome, Terminal

RewardMode = Mode

SEARCH_LAYOUT = "search"
PURSUIT_LAYOUT = "pursuit"


def decode_action(a) -> np.ndarray:
    """Heading ``(cos(a*pi), sin(a*pi))`` for a scalar or array of actions in [-1, 1]."""
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    return np.stack([np.cos(a * np.pi), np.sin(a * np.pi)], axis=-1)


@dataclass(frozen=True)
class Observation:
    values: np.ndarray
    layout: str


def observe(state: GameState, config: GameConfig, defender_index: int) -> Observation:
    """Shared defender view: teammates before sensing, everyone after.

    Every defender receives the same vector because positions are shared by
    communication.
    """
    if not 0 <= defender_index < config.n_defenders:
        raise IndexError(defender_index)
    if state.phase is Phase.SEARCH:
        return Observation(state.defenders.ravel().copy(), SEARCH_LAYOUT)
    return Observation(state.global_vector(), PURSUIT_LAYOUT)


def padded_observation(defenders, attacker, pursuit) -> np.ndarray:
    """Fixed-width encoding of :func:`observe` for the trainer.

    Layout is ``[defenders, attacker or zeros, pursuit_flag]``, broadcasting
    over leading batch dimensions.
    """
    defenders = np.asarray(defenders, dtype=float)
    attacker = np.asarray(attacker, dtype=float)
    pursuit = np.asarray(pursuit, dtype=bool)
    flat = defenders.reshape(defenders.shape[:-2] + (-1,))
    att = np.where(pursuit[..., None], attacker, 0.0)
    return np.concatenate([flat, att, pursuit[..., None].astype(float)], axis=-1)


def global_state(defenders, attacker, pursuit) -> np.ndarray:
    """Critic input: every position (the attacker included) plus the phase flag."""
    defenders = np.asarray(defenders, dtype=float)
    flat = defenders.reshape(defenders.shape[:-2] + (-1,))
    return np.concatenate([flat, np.asarray(attacker, dtype=float),
                           np.asarray(pursuit, dtype=float)[..., None]], axis=-1)


def obs_dim(config: GameConfig) -> int:
    return 2 * (config.n_defenders + 1) + 1


def gt_reward(state: GameState, config: GameConfig) -> float:
    """Equilibrium payoff at the sensed configuration; 0 without a capturer."""
    value = engine.nash_at(state, config)
    return 0.0 if value is None else value


def standard_reward(outcome: StepOutcome) -> float:
    if not outcome.done:
        return 0.0
    return max(0.0, float(outcome.state.attacker[1]))


def saved_steps_estimate(config: GameConfig, defender_index: int = 0) -> float:
    """Pursuit steps skipped by stopping at sensing, for a direct 1-D chase."""
    d = config.defenders[defender_index]
    if d.speed <= config.attacker_speed:
        raise ValueError("defender must be faster than the attacker")
    return (d.sensing_radius - d.capture_radius) / (d.speed - config.attacker_speed) / config.dt


@dataclass
class EpisodeInfo:
    slot: int
    episode: int
    terminal: Terminal
    reward: float
    length: int
    sensing_step: Optional[int]
    nash_at_sensing: Optional[float]

    @property
    def sensed(self) -> bool:
        return self.sensing_step is not None


class BatchEnv:
    """``n`` independent copies of the game stepped together, with auto-reset.

    Slot ``i``'s ``k``-th episode spawns from ``default_rng([seed, i, k])``,
    so each slot's trajectory is independent of what the other slots do.
    """

    def __init__(self, config: GameConfig, n_envs: int = 20, mode: Mode | str = Mode.GT_ASSISTED,
                 gamma: float = 0.99, seed: Optional[int] = None):
        self.config = config
        self.n = int(n_envs)
        self.mode = Mode.parse(mode)
        self.gamma = gamma
        self.seed = config.seed if seed is None else int(seed)
        nd = config.n_defenders
        self.defenders = np.zeros((self.n, nd, 2))
        self.attacker = np.zeros((self.n, 2))
        self.steps = np.zeros(self.n, dtype=np.int64)
        self.pursuit = np.zeros(self.n, dtype=bool)
        self.sensing_step = np.full(self.n, -1, dtype=np.int64)
        self.nash_at_sensing = np.full(self.n, np.nan)
        self.episode = np.zeros(self.n, dtype=np.int64)
        for i in range(self.n):
            self._spawn(i)

    @property
    def n_defenders(self) -> int:
        return self.config.n_defenders

    def _spawn(self, i: int) -> None:
        rng = np.random.default_rng([self.seed, i, int(self.episode[i])])
        s = engine.sense_initial(engine.spawn(self.config, rng), self.config)
        self.defenders[i] = s.defenders
        self.attacker[i] = s.attacker
        self.steps[i] = 0
        self.pursuit[i] = s.phase is Phase.PURSUIT
        self.sensing_step[i] = -1 if s.sensing_step is None else s.sensing_step
        self.nash_at_sensing[i] = np.nan
        if self.pursuit[i]:
            self.nash_at_sensing[i] = _nan_if_none(engine.nash_at(s, self.config))

    def state(self, i: int) -> GameState:
        t_s = int(self.sensing_step[i]) if self.pursuit[i] else None
        return GameState(self.defenders[i], self.attacker[i], int(self.steps[i]),
                         Phase(int(self.pursuit[i])), t_s)

    def observations(self) -> np.ndarray:
        """``(n, n_d, obs_dim)`` padded observations (identical across defenders)."""
        obs = padded_observation(self.defenders, self.attacker, self.pursuit)
        return np.repeat(obs[:, None, :], self.n_defenders, axis=1)

    def global_states(self) -> np.ndarray:
        return global_state(self.defenders, self.attacker, self.pursuit)

    def _attacker_controls(self) -> np.ndarray:
        u = np.tile(engine.DOWN, (self.n, 1))
        for i in np.flatnonzero(self.pursuit):
            u[i] = engine.attacker_phase2_control(self.state(i), self.config)
        return u

    def batch_step(self, actions):
        """Advance every slot once.

        Returns ``(observations, rewards, dones, infos)``: observations after
        auto-reset, rewards ``(n, n_d)`` (shared within a slot), done flags
        ``(n,)`` and an :class:`EpisodeInfo` per finished slot.
        """
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n, self.n_defenders):
            raise ValueError(f"actions must have shape {(self.n, self.n_defenders)}, got {actions.shape}")
        cfg = self.config
        gt = self.mode is Mode.GT_ASSISTED
        rewards = np.zeros(self.n)
        dones = np.zeros(self.n, dtype=bool)
        infos: list[EpisodeInfo] = []

        # slots that spawned already sensed end immediately in GT mode
        pre_sensed = self.pursuit & (self.steps == 0) & (self.sensing_step == 0) if gt else np.zeros(self.n, bool)

        d_u = decode_action(actions)
        a_u = self._attacker_controls()
        new_d, new_a = engine.advance(self.defenders, self.attacker, d_u, a_u, cfg)
        new_d = np.where(pre_sensed[:, None, None], self.defenders, new_d)
        new_a = np.where(pre_sensed[:, None], self.attacker, new_a)
        captured, breached, sensed = engine.detect(new_d, new_a, cfg)
        steps = np.where(pre_sensed, self.steps, self.steps + 1)
        newly = sensed & ~self.pursuit

        self.defenders, self.attacker, self.steps = new_d, new_a, steps
        for i in np.flatnonzero(newly):
            self.pursuit[i] = True
            self.sensing_step[i] = steps[i]
            self.nash_at_sensing[i] = _nan_if_none(engine.nash_at(self.state(i), cfg))

        timeout = steps >= cfg.max_steps
        for i in range(self.n):
            if pre_sensed[i]:
                term = Terminal.SENSED
            elif captured[i]:
                term = Terminal.CAPTURED
            elif breached[i]:
                term = Terminal.BREACHED
            elif gt and newly[i]:
                term = Terminal.SENSED
            elif timeout[i]:
                term = Terminal.TIMEOUT
            else:
                continue
            y = max(0.0, float(self.attacker[i, 1]))
            if gt and self.pursuit[i]:
                r = 0.0 if math.isnan(self.nash_at_sensing[i]) else float(self.nash_at_sensing[i])
            elif gt and term is not Terminal.CAPTURED:
                r = 0.0
            else:
                r = y
            rewards[i] = r
            dones[i] = True
            nash = None if math.isnan(self.nash_at_sensing[i]) else float(self.nash_at_sensing[i])
            infos.append(EpisodeInfo(i, int(self.episode[i]), term, r, int(steps[i]),
                                     int(self.sensing_step[i]) if self.pursuit[i] else None, nash))
            self.episode[i] += 1
            self._spawn(i)

        shared = np.repeat(rewards[:, None], self.n_defenders, axis=1)
        return self.observations(), shared, dones, infos


def _nan_if_none(v):
    return np.nan if v is None else v
