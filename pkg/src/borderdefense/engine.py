"""Game physics: kinematics, spawning, sensing, terminal conditions, scripted play.

The kinematic core (:func:`advance`, :func:`detect`) works on arrays with
arbitrary leading batch dimensions so the vectorised environment and the
single-state :func:`step` share one implementation.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import NoCaptureCapability, PursuitConfig, nash_payoff_multi

DOWN = np.array([0.0, -1.0])
# Controls may exceed unit norm by this much (rounding in cos/sin decoding).
CONTROL_NORM_SLACK = 1e-9


class Phase(enum.IntEnum):
    SEARCH = 0
    PURSUIT = 1


class Terminal(enum.Enum):
    NONE = "none"
    SENSED = "sensed"
    CAPTURED = "captured"
    BREACHED = "breached"
    TIMEOUT = "timeout"


class Mode(enum.Enum):
    """Episode/reward structure: stop at sensing, or play through pursuit."""

    GT_ASSISTED = "gt"
    STANDARD = "standard"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {"gt": cls.GT_ASSISTED, "gt_assisted": cls.GT_ASSISTED,
                   "standard": cls.STANDARD, "std": cls.STANDARD}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown mode {value!r}") from None


class ConfigError(ValueError):
    pass


class PolicyError(RuntimeError):
    pass


@dataclass(frozen=True)
class DefenderSpec:
    speed: float = 0.333
    sensing_radius: float = 0.3
    capture_radius: float = 0.07
    # Explicit flag so point capture (capture_radius == 0) stays expressible.
    can_capture: bool = True


Rect = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class GameConfig:
    defenders: tuple[DefenderSpec, ...] = (DefenderSpec(),)
    attacker_speed: float = 0.1
    attacker_spawn: Rect = ((0.0, 1.0), (0.9, 1.0))
    defender_spawn: Rect = ((0.0, 1.0), (0.0, 0.1))
    dt: float = 0.05
    max_steps: int = 400
    seed: int = 0
    capture_tolerance: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "defenders", tuple(self.defenders))
        object.__setattr__(self, "attacker_spawn", _rect(self.attacker_spawn))
        object.__setattr__(self, "defender_spawn", _rect(self.defender_spawn))
        if not self.defenders:
            raise ConfigError("at least one defender is required")
        if not self.attacker_speed > 0:
            raise ConfigError("attacker_speed must be positive")
        for k, d in enumerate(self.defenders):
            if not d.speed > self.attacker_speed:
                raise ConfigError(f"defender {k} must be faster than the attacker")
            if d.sensing_radius < 0 or d.capture_radius < 0:
                raise ConfigError(f"defender {k} has a negative radius")
        for name in ("attacker_spawn", "defender_spawn"):
            (x0, x1), (y0, y1) = getattr(self, name)
            if not (0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0):
                raise ConfigError(f"{name} must be a rectangle inside [0,1]^2")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ConfigError("max_steps must be a positive integer")

    @classmethod
    def benchmark(cls, n_defenders: int = 1, sensing_radius: float | None = None, **overrides) -> "GameConfig":
        """Homogeneous team with the default benchmark parameters.

        Sensing radius defaults to 0.3 for a single defender and 0.15 otherwise.
        """
        if sensing_radius is None:
            sensing_radius = 0.3 if n_defenders == 1 else 0.15
        v_a = overrides.pop("attacker_speed", 0.1)
        nu = overrides.pop("speed_ratio", 3.33)
        dt = overrides.pop("dt", 0.05)
        rho_c = overrides.pop("capture_radius", 0.07)
        spec = DefenderSpec(speed=nu * v_a, sensing_radius=sensing_radius, capture_radius=rho_c)
        overrides.setdefault("max_steps", int(round(2.0 / (v_a * dt))))
        return cls(defenders=(spec,) * n_defenders, attacker_speed=v_a, dt=dt, **overrides)

    @property
    def n_defenders(self) -> int:
        return len(self.defenders)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([d.speed for d in self.defenders])

    @property
    def sensing_radii(self) -> np.ndarray:
        return np.array([d.sensing_radius for d in self.defenders])

    @property
    def capture_radii(self) -> np.ndarray:
        return np.array([d.capture_radius for d in self.defenders])

    @property
    def capture_mask(self) -> np.ndarray:
        return np.array([d.can_capture for d in self.defenders], dtype=bool)

    @property
    def speed_ratios(self) -> np.ndarray:
        return self.speeds / self.attacker_speed

    def with_defenders(self, **changes) -> "GameConfig":
        return replace(self, defenders=tuple(replace(d, **changes) for d in self.defenders))


def _rect(r) -> Rect:
    (x0, x1), (y0, y1) = r
    return ((float(x0), float(x1)), (float(y0), float(y1)))


@dataclass(frozen=True)
class GameState:
    defenders: np.ndarray          # (n_d, 2)
    attacker: np.ndarray           # (2,)
    step: int = 0
    phase: Phase = Phase.SEARCH
    sensing_step: Optional[int] = None
    terminal: Terminal = Terminal.NONE

    def __post_init__(self):
        object.__setattr__(self, "defenders", np.array(self.defenders, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "attacker", np.array(self.attacker, dtype=float).reshape(2))
        if (self.phase is Phase.PURSUIT) != (self.sensing_step is not None):
            raise ValueError("phase is PURSUIT exactly when sensing_step is set")

    def global_vector(self) -> np.ndarray:
        return np.concatenate([self.defenders.ravel(), self.attacker])


@dataclass(frozen=True)
class StepOutcome:
    state: GameState
    terminal: Terminal
    payoff_y: Optional[float] = None

    @property
    def done(self) -> bool:
        return self.terminal is not Terminal.NONE


# --------------------------------------------------------------------------
# vectorised core

def advance(defenders, attacker, defender_u, attacker_u, config: GameConfig):
    """Euler step with wall handling.

    Defenders are clamped to the unit square; the attacker only in x, so that
    it can cross y = 0.
    """
    dt = config.dt
    d = defenders + config.speeds[:, None] * dt * defender_u
    a = attacker + config.attacker_speed * dt * attacker_u
    d = np.clip(d, 0.0, 1.0)
    a = a.copy()
    a[..., 0] = np.clip(a[..., 0], 0.0, 1.0)
    return d, a


def detect(defenders, attacker, config: GameConfig):
    """Return ``(captured, breached, sensed)`` boolean arrays over the batch dims."""
    dist = np.linalg.norm(defenders - attacker[..., None, :], axis=-1)
    captured = (config.capture_mask & (dist <= config.capture_radii + config.capture_tolerance)).any(-1)
    breached = attacker[..., 1] <= 0.0
    sensed = (dist <= config.sensing_radii).any(-1)
    return captured, breached, sensed


# --------------------------------------------------------------------------
# single-state API

def spawn(config: GameConfig, rng: np.random.Generator) -> GameState:
    (ax0, ax1), (ay0, ay1) = config.attacker_spawn
    (dx0, dx1), (dy0, dy1) = config.defender_spawn
    attacker = np.array([rng.uniform(ax0, ax1), rng.uniform(ay0, ay1)])
    n = config.n_defenders
    defenders = np.column_stack([rng.uniform(dx0, dx1, n), rng.uniform(dy0, dy1, n)])
    return GameState(defenders, attacker)


def sense_initial(state: GameState, config: GameConfig) -> GameState:
    """Mark a freshly spawned state as sensed when a defender already sees the attacker."""
    if state.phase is Phase.PURSUIT:
        return state
    _, _, sensed = detect(state.defenders, state.attacker, config)
    if sensed:
        return replace(state, phase=Phase.PURSUIT, sensing_step=state.step)
    return state


def _check_controls(u, count) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    if u.shape[0] != count:
        raise ValueError(f"expected {count} controls, got {u.shape[0]}")
    if not np.all(np.isfinite(u)) or np.any(np.linalg.norm(u, axis=1) > 1.0 + CONTROL_NORM_SLACK):
        raise ValueError("controls must be finite with norm <= 1")
    return u


def step(state: GameState, config: GameConfig, defender_headings, attacker_control,
         sensing_terminal: bool = False) -> StepOutcome:
    """Advance one time step and evaluate terminal conditions.

    Priority after the move: capture, breach, sensing (terminal only when
    ``sensing_terminal``), timeout.
    """
    if state.terminal is not Terminal.NONE:
        raise ValueError(f"cannot step a terminal state ({state.terminal.value})")
    d_u = _check_controls(defender_headings, config.n_defenders)
    a_u = _check_controls(attacker_control, 1)[0]
    d, a = advance(state.defenders, state.attacker, d_u, a_u, config)
    captured, breached, sensed = detect(d, a, config)
    t = state.step + 1
    phase, t_s = state.phase, state.sensing_step
    newly_sensed = bool(sensed) and phase is Phase.SEARCH
    if newly_sensed:
        phase, t_s = Phase.PURSUIT, t

    if captured:
        terminal = Terminal.CAPTURED
    elif breached:
        terminal = Terminal.BREACHED
    elif newly_sensed and sensing_terminal:
        terminal = Terminal.SENSED
    elif t >= config.max_steps:
        terminal = Terminal.TIMEOUT
    else:
        terminal = Terminal.NONE
    nxt = GameState(d, a, t, phase, t_s, terminal)
    payoff = max(0.0, float(a[1])) if terminal is not Terminal.NONE else None
    return StepOutcome(nxt, terminal, payoff)


# --------------------------------------------------------------------------
# scripted play

def attacker_phase1_control() -> np.ndarray:
    return DOWN.copy()


def pursuit_config(state: GameState, config: GameConfig) -> PursuitConfig:
    nus = config.speed_ratios
    return PursuitConfig(
        tuple(state.attacker),
        tuple((tuple(state.defenders[i]), nus[i]) for i in np.flatnonzero(config.capture_mask)),
    )


def nash_at(state: GameState, config: GameConfig) -> Optional[float]:
    """Equilibrium payoff of the pursuit game from ``state``; None without capturers."""
    try:
        return nash_payoff_multi(pursuit_config(state, config)).payoff
    except NoCaptureCapability:
        return None


def _unit_towards(src, dst) -> np.ndarray:
    delta = np.asarray(dst, dtype=float) - src
    n = math.hypot(delta[0], delta[1])
    return delta / n if n > 0 else np.zeros(2)


def attacker_phase2_control(state: GameState, config: GameConfig) -> np.ndarray:
    """Head for the lowest point of the dominance region, recomputed every step."""
    try:
        target = nash_payoff_multi(pursuit_config(state, config)).intercept_point
    except NoCaptureCapability:
        return DOWN.copy()
    a = state.attacker
    if math.hypot(target.x - a[0], target.y - a[1]) <= config.attacker_speed * config.dt:
        return DOWN.copy()
    return _unit_towards(a, target)


def attacker_control(state: GameState, config: GameConfig) -> np.ndarray:
    if state.phase is Phase.SEARCH:
        return attacker_phase1_control()
    return attacker_phase2_control(state, config)


def defender_optimal_pursuit(state: GameState, config: GameConfig) -> np.ndarray:
    """Equilibrium pursuit headings; sensing-only defenders hold position.

    Capturers head for the current intercept point.  A capturer that can
    reach the attacker's next position within one step moves exactly there,
    which realises point capture in discrete time.
    """
    u = np.zeros((config.n_defenders, 2))
    try:
        target = nash_payoff_multi(pursuit_config(state, config)).intercept_point
    except NoCaptureCapability:
        return u
    a_next = state.attacker + config.attacker_speed * config.dt * attacker_phase2_control(state, config)
    for i in np.flatnonzero(config.capture_mask):
        reach = config.defenders[i].speed * config.dt
        gap = a_next - state.defenders[i]
        dist = math.hypot(gap[0], gap[1])
        if dist <= reach:
            u[i] = gap / reach
        elif math.hypot(target.x - state.defenders[i, 0], target.y - state.defenders[i, 1]) > 1e-12:
            u[i] = _unit_towards(state.defenders[i], target)
    return u


DefenderPolicy = Callable[[GameState, GameConfig], np.ndarray]


def hold_position(state: GameState, config: GameConfig) -> np.ndarray:
    return np.zeros((config.n_defenders, 2))


def scripted_policy(search: DefenderPolicy = hold_position) -> DefenderPolicy:
    """``search`` before sensing, equilibrium pursuit afterwards."""

    def policy(state: GameState, config: GameConfig) -> np.ndarray:
        if state.phase is Phase.SEARCH:
            return search(state, config)
        return defender_optimal_pursuit(state, config)

    return policy


# --------------------------------------------------------------------------
# episodes

@dataclass
class EpisodeRecord:
    mode: Mode
    states: list[GameState]
    defender_controls: list[np.ndarray] = field(default_factory=list)
    attacker_controls: list[np.ndarray] = field(default_factory=list)
    terminal: Terminal = Terminal.NONE
    payoff: float = 0.0
    nash_at_sensing: Optional[float] = None

    @property
    def sensing_step(self) -> Optional[int]:
        return self.states[-1].sensing_step

    @property
    def sensed(self) -> bool:
        return self.sensing_step is not None

    @property
    def length(self) -> int:
        return len(self.states) - 1

    def trace_lines(self) -> list[str]:
        """One JSON object per state; controls are those applied from that state."""
        lines = []
        n = len(self.states)
        for k, s in enumerate(self.states):
            last = k == n - 1
            rec = {
                "step": s.step,
                "defenders": s.defenders.tolist(),
                "attacker": s.attacker.tolist(),
                "defender_controls": None if last else self.defender_controls[k].tolist(),
                "attacker_control": None if last else self.attacker_controls[k].tolist(),
                "phase": s.phase.name.lower(),
                "terminal": s.terminal.value,
            }
            lines.append(json.dumps(rec, separators=(",", ":")))
        return lines

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.trace_lines()) + "\n")


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def rollout(state: GameState, config: GameConfig, defender_policy: DefenderPolicy,
            mode: Mode | str = Mode.STANDARD) -> EpisodeRecord:
    """Play from ``state`` until the mode's terminal condition.

    GT-assisted mode stops at sensing and pays the equilibrium payoff of the
    sensed configuration; breach or timeout without sensing pay 0.  Standard
    mode plays through pursuit and pays ``max(0, y_A)`` at termination.
    """
    mode = Mode.parse(mode)
    gt = mode is Mode.GT_ASSISTED
    state = sense_initial(state, config)
    rec = EpisodeRecord(mode, [state])
    if state.phase is Phase.PURSUIT:
        rec.nash_at_sensing = nash_at(state, config)
        if gt:
            sensed = replace(state, terminal=Terminal.SENSED)
            rec.states[-1] = sensed
            rec.terminal = Terminal.SENSED
            rec.payoff = rec.nash_at_sensing or 0.0
            return rec

    while True:
        try:
            d_u = np.asarray(defender_policy(state, config), dtype=float)
        except Exception as exc:
            raise PolicyError(f"defender policy failed at step {state.step}: {exc}") from exc
        a_u = attacker_control(state, config)
        out = step(state, config, d_u, a_u, sensing_terminal=gt)
        rec.defender_controls.append(d_u.reshape(-1, 2))
        rec.attacker_controls.append(a_u)
        if out.state.phase is Phase.PURSUIT and state.phase is Phase.SEARCH:
            rec.nash_at_sensing = nash_at(out.state, config)
        state = out.state
        rec.states.append(state)
        if out.done:
            rec.terminal = out.terminal
            if gt and state.phase is Phase.PURSUIT:
                # a capture on the sensing step still pays the equilibrium value
                rec.payoff = rec.nash_at_sensing or 0.0
            elif gt and out.terminal is not Terminal.CAPTURED:
                rec.payoff = 0.0
            else:
                rec.payoff = out.payoff_y
            return rec


def run_episode(config: GameConfig, defender_policy: DefenderPolicy, mode: Mode | str,
                rng: np.random.Generator) -> EpisodeRecord:
    return rollout(spawn(config, rng), config, defender_policy, mode)
