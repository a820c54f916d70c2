"""Compact MAPPO: Gaussian heading actors, centralised critic, GAE, clipped updates."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from .env import BatchEnv, obs_dim

log = logging.getLogger(__name__)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
CHECKPOINT_FORMAT = "borderdefense-mappo"
CHECKPOINT_VERSION = 1
METRICS_FIELDS = ("iteration", "frames", "mean_reward", "std_reward", "episode_length",
                  "sensing_rate", "episodes")


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 1000
    frames_per_batch: int = 6000
    total_frames: int = 600_000
    n_envs: int = 20
    hidden: int = 64
    share_actor: bool = True
    entropy_coef: float = 0.01
    entropy_decay: bool = True
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    init_log_std: float = -1.0
    eval_interval: int = 25
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        for name in ("epochs", "minibatch_size", "frames_per_batch", "n_envs", "hidden", "eval_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def mlp(inp: int, hidden: int, out: int, out_gain: float = 1.0) -> nn.Sequential:
    """Two tanh hidden layers, orthogonal init, zero biases."""
    layers = [nn.Linear(inp, hidden), nn.Linear(hidden, hidden), nn.Linear(hidden, out)]
    for layer, gain in zip(layers, (math.sqrt(2), math.sqrt(2), out_gain)):
        nn.init.orthogonal_(layer.weight, gain)
        nn.init.zeros_(layer.bias)
    return nn.Sequential(layers[0], nn.Tanh(), layers[1], nn.Tanh(), layers[2])


class Actor(nn.Module):
    """Mean network plus a state-independent log standard deviation."""

    def __init__(self, inp: int, hidden: int = 64, init_log_std: float = -1.0):
        super().__init__()
        self.mean = mlp(inp, hidden, 1, out_gain=0.01)
        self.log_std = nn.Parameter(torch.tensor([float(init_log_std)]))

    def forward(self, x):
        mu = self.mean(x).squeeze(-1)
        log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).expand_as(mu)
        return mu, log_std


class TeamPolicy(nn.Module):
    """One actor per defender, or one shared actor fed a one-hot defender id.

    The id is what lets a shared actor assign different roles: every
    defender receives the same observation vector.
    """

    def __init__(self, obs_size: int, n_agents: int, hidden: int = 64, shared: bool = True,
                 init_log_std: float = -1.0):
        super().__init__()
        self.obs_size, self.n_agents, self.hidden, self.shared = obs_size, n_agents, hidden, shared
        self.use_id = shared and n_agents > 1
        inp = obs_size + (n_agents if self.use_id else 0)
        n_nets = 1 if shared else n_agents
        self.actors = nn.ModuleList(Actor(inp, hidden, init_log_std) for _ in range(n_nets))

    def forward(self, obs):
        """``obs`` is ``(..., n_agents, obs_size)``; returns mean and log-std ``(..., n_agents)``."""
        if self.shared:
            x = obs
            if self.use_id:
                eye = torch.eye(self.n_agents, dtype=obs.dtype).expand(obs.shape[:-1] + (self.n_agents,))
                x = torch.cat([obs, eye], dim=-1)
            return self.actors[0](x)
        outs = [self.actors[i](obs[..., i, :]) for i in range(self.n_agents)]
        return torch.stack([o[0] for o in outs], -1), torch.stack([o[1] for o in outs], -1)

    def layout(self) -> dict:
        return {"obs_size": self.obs_size, "n_agents": self.n_agents,
                "hidden": self.hidden, "shared": self.shared}


class Critic(nn.Module):
    def __init__(self, state_size: int, hidden: int = 64):
        super().__init__()
        self.state_size, self.hidden = state_size, hidden
        self.net = mlp(state_size, hidden, 1)

    def forward(self, s):
        return self.net(s).squeeze(-1)


def gaussian_log_prob(x, mu, log_std):
    std = np.exp(log_std) if isinstance(log_std, np.ndarray) else log_std.exp()
    return -0.5 * ((x - mu) / std) ** 2 - log_std - 0.5 * math.log(2 * math.pi)


def gaussian_entropy(log_std):
    return 0.5 + 0.5 * math.log(2 * math.pi) + log_std


def _finite_or_raise(t: torch.Tensor, what: str):
    if not torch.all(torch.isfinite(t)):
        raise TrainingDivergence(f"non-finite {what}")


def sample_actions(policy: TeamPolicy, obs: np.ndarray, rng: np.random.Generator,
                   deterministic: bool = False):
    """Sample clamped actions for a batch of ``(..., n_agents, obs_size)`` observations.

    Returns ``(actions, raw, log_prob)``; ``log_prob`` is that of the
    pre-clamp sample ``raw``, so the update ratio at unchanged parameters
    is exactly 1.
    """
    with torch.no_grad():
        mu, log_std = policy(torch.as_tensor(obs, dtype=torch.float32))
    _finite_or_raise(mu, "action mean")
    mu, log_std = mu.numpy().astype(np.float64), log_std.numpy().astype(np.float64)
    if deterministic:
        raw = mu
    else:
        raw = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
    logp = gaussian_log_prob(raw, mu, log_std)
    return np.clip(raw, -1.0, 1.0), raw, logp


def sample_action(policy: TeamPolicy, obs, agent: int, rng: np.random.Generator):
    """Single-defender variant: ``obs`` is the padded observation of ``agent``."""
    full = np.zeros((policy.n_agents, policy.obs_size))
    full[agent] = obs
    a, _, logp = sample_actions(policy, full, rng)
    return float(a[agent]), float(logp[agent])


def gae(rewards, values, dones, last_values, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates over a ``(T, n)`` rollout.

    ``values[t]`` estimates the state before step ``t``; ``last_values`` is
    the bootstrap for the state after the final step.  A done flag stops both
    the bootstrap and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_adv = np.zeros_like(rewards[0])
    next_v = np.asarray(last_values, dtype=float)
    for t in reversed(range(T)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_v = values[t]
    return adv


def clipped_surrogate(log_prob, old_log_prob, advantages, clip: float):
    """Negated clipped surrogate (a loss to minimise)."""
    ratio = torch.exp(log_prob - old_log_prob)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages
    return -torch.min(unclipped, clipped).mean()


def clipped_value_loss(values, old_values, returns, clip: float):
    v_clip = old_values + torch.clamp(values - old_values, -clip, clip)
    return torch.max((values - returns) ** 2, (v_clip - returns) ** 2).mean()


def ppo_losses(policy: TeamPolicy, critic: Critic, batch: dict, clip: float):
    """Policy surrogate, value loss and mean entropy for one minibatch."""
    mu, log_std = policy(batch["obs"])
    logp = gaussian_log_prob(batch["raw"], mu, log_std)
    adv = batch["adv"][..., None].expand_as(logp)
    pol = clipped_surrogate(logp, batch["logp"], adv, clip)
    val = clipped_value_loss(critic(batch["state"]), batch["values"], batch["returns"], clip)
    ent = gaussian_entropy(log_std).mean()
    return pol, val, ent


@dataclass
class Learner:
    policy: TeamPolicy
    critic: Critic
    actor_opt: torch.optim.Optimizer
    critic_opt: torch.optim.Optimizer

    @classmethod
    def create(cls, obs_size: int, state_size: int, n_agents: int, cfg: TrainConfig) -> "Learner":
        policy = TeamPolicy(obs_size, n_agents, cfg.hidden, cfg.share_actor, cfg.init_log_std)
        critic = Critic(state_size, cfg.hidden)
        return cls(policy, critic,
                   torch.optim.Adam(policy.parameters(), lr=cfg.actor_lr),
                   torch.optim.Adam(critic.parameters(), lr=cfg.critic_lr))


def ppo_update(learner: Learner, batch: dict, cfg: TrainConfig, rng: np.random.Generator,
               entropy_coef: Optional[float] = None) -> dict:
    """Epochs of minibatch updates on a flattened rollout batch.

    ``batch`` holds tensors keyed obs, state, raw, logp, adv, values, returns
    with a common first dimension.  Raises :class:`TrainingDivergence` on a
    non-finite loss.
    """
    ent_coef = cfg.entropy_coef if entropy_coef is None else entropy_coef
    n = batch["obs"].shape[0]
    if n == 0:
        raise ValueError("empty batch")
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    params = list(learner.policy.parameters()) + list(learner.critic.parameters())
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = torch.as_tensor(order[start:start + cfg.minibatch_size])
            mb = {k: v[idx] for k, v in batch.items()}
            adv = mb["adv"]
            if adv.numel() > 1:
                mb["adv"] = (adv - adv.mean()) / (adv.std() + 1e-8)
            pol, val, ent = ppo_losses(learner.policy, learner.critic, mb, cfg.clip)
            loss = pol + cfg.value_coef * val - ent_coef * ent
            _finite_or_raise(loss, "loss")
            learner.actor_opt.zero_grad()
            learner.critic_opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(params, cfg.max_grad_norm)
            learner.actor_opt.step()
            learner.critic_opt.step()
            stats["policy_loss"] += pol.item()
            stats["value_loss"] += val.item()
            stats["entropy"] += ent.item()
            count += 1
    return {k: v / count for k, v in stats.items()}


# --------------------------------------------------------------------------
# rollouts and training

def collect_rollout(env: BatchEnv, learner: Learner, steps: int, cfg: TrainConfig,
                    rng: np.random.Generator):
    n, nd = env.n, env.n_defenders
    obs_l, state_l, raw_l, logp_l, val_l, rew_l, done_l = [], [], [], [], [], [], []
    infos = []
    obs = env.observations()
    for _ in range(steps):
        state = env.global_states()
        _, raw, logp = sample_actions(learner.policy, obs, rng)
        with torch.no_grad():
            v = learner.critic(torch.as_tensor(state, dtype=torch.float32)).numpy()
        next_obs, rewards, dones, step_infos = env.batch_step(np.clip(raw, -1.0, 1.0))
        obs_l.append(obs)
        state_l.append(state)
        raw_l.append(raw)
        logp_l.append(logp)
        val_l.append(v.astype(np.float64))
        rew_l.append(rewards[:, 0])
        done_l.append(dones)
        infos.extend(step_infos)
        obs = next_obs
    with torch.no_grad():
        last_v = learner.critic(torch.as_tensor(env.global_states(), dtype=torch.float32)).numpy()
    rewards, values, dones = np.array(rew_l), np.array(val_l), np.array(done_l)
    adv = gae(rewards, values, dones, last_v.astype(np.float64), cfg.gamma, cfg.lam)
    returns = adv + values
    T = len(obs_l)

    def flat(a, tail=()):
        return torch.as_tensor(np.asarray(a).reshape((T * n,) + tail), dtype=torch.float32)

    batch = {
        "obs": flat(obs_l, (nd, obs_l[0].shape[-1])),
        "state": flat(state_l, (state_l[0].shape[-1],)),
        "raw": flat(raw_l, (nd,)),
        "logp": flat(logp_l, (nd,)),
        "adv": flat(adv),
        "values": flat(values),
        "returns": flat(returns),
    }
    return batch, infos


def episode_stats(infos) -> dict:
    if not infos:
        return {"mean_reward": float("nan"), "std_reward": float("nan"),
                "episode_length": float("nan"), "sensing_rate": float("nan"), "episodes": 0}
    r = np.array([i.reward for i in infos])
    return {"mean_reward": float(r.mean()), "std_reward": float(r.std()),
            "episode_length": float(np.mean([i.length for i in infos])),
            "sensing_rate": float(np.mean([i.sensed for i in infos])), "episodes": len(infos)}


@dataclass
class TrainResult:
    learner: Learner
    metrics: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    frames: int = 0


def train(env: BatchEnv, cfg: TrainConfig, out_dir: Optional[os.PathLike] = None,
          learner: Optional[Learner] = None, start_frames: int = 0, start_iteration: int = 0,
          extra_meta: Optional[dict] = None) -> TrainResult:
    """Alternate rollouts and PPO updates until ``cfg.total_frames``.

    One frame is one environment step of one slot.  With ``out_dir`` set,
    per-iteration metrics are appended to ``metrics.csv`` and a checkpoint
    is written every ``eval_interval`` iterations and at the end.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    nd = env.n_defenders
    if learner is None:
        learner = Learner.create(obs_dim(env.config), 2 * (nd + 1) + 1, nd, cfg)
    elif learner.policy.n_agents != nd or learner.policy.obs_size != obs_dim(env.config):
        raise ValueError("learner is incompatible with the environment")
    steps = max(1, math.ceil(cfg.frames_per_batch / env.n))
    result = TrainResult(learner, frames=start_frames)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_path = out / "metrics.csv"
        fresh = start_frames == 0 or not metrics_path.exists()
        fh = open(metrics_path, "w" if fresh else "a", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(METRICS_FIELDS)

    it = start_iteration
    try:
        while result.frames < cfg.total_frames:
            it += 1
            frac = min(1.0, result.frames / max(1, cfg.total_frames))
            ent = cfg.entropy_coef * (1.0 - frac) if cfg.entropy_decay else cfg.entropy_coef
            batch, infos = collect_rollout(env, learner, steps, cfg, rng)
            result.frames += steps * env.n
            losses = ppo_update(learner, batch, cfg, rng, ent)
            row = {"iteration": it, "frames": result.frames, **episode_stats(infos)}
            result.metrics.append({**row, **losses})
            log.debug("iter %d frames %d reward %.4f sensing %.3f", it, result.frames,
                      row["mean_reward"], row["sensing_rate"])
            if writer is not None:
                writer.writerow([_fmt(row[k]) for k in METRICS_FIELDS])
                fh.flush()
                last = result.frames >= cfg.total_frames
                if it % cfg.eval_interval == 0 or last:
                    path = out / "checkpoints" / f"ckpt_{result.frames:09d}.pt"
                    save_checkpoint(path, learner, cfg, result.frames, it, extra_meta)
                    result.checkpoints.append(path)
    finally:
        if writer is not None:
            fh.close()
    return result


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, learner: Learner, cfg: TrainConfig, frames: int, iteration: int,
                    meta: Optional[dict] = None) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": learner.policy.layout() | {"state_size": learner.critic.state_size},
        "policy": learner.policy.state_dict(),
        "critic": learner.critic.state_dict(),
        "actor_opt": learner.actor_opt.state_dict(),
        "critic_opt": learner.critic_opt.state_dict(),
        "train_config": dataclasses.asdict(cfg),
        "frames": frames,
        "iteration": iteration,
        "meta": meta or {},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[Learner, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f"no such checkpoint: {path}") from None
    except Exception as exc:  # torch raises several unrelated types for junk files
        raise CheckpointError(f"{path} is not a readable checkpoint: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    lay = payload["layout"]
    cfg = TrainConfig(**payload["train_config"])
    policy = TeamPolicy(lay["obs_size"], lay["n_agents"], lay["hidden"], lay["shared"])
    critic = Critic(lay["state_size"], lay["hidden"])
    policy.load_state_dict(payload["policy"])
    critic.load_state_dict(payload["critic"])
    learner = Learner(policy, critic, torch.optim.Adam(policy.parameters(), lr=cfg.actor_lr),
                      torch.optim.Adam(critic.parameters(), lr=cfg.critic_lr))
    learner.actor_opt.load_state_dict(payload["actor_opt"])
    learner.critic_opt.load_state_dict(payload["critic_opt"])
    return learner, payload


def policy_controls(policy: TeamPolicy, deterministic: bool = True,
                    rng: Optional[np.random.Generator] = None):
    """Wrap a trained policy as an engine defender policy (state -> headings)."""
    from .env import decode_action, padded_observation

    rng = rng if rng is not None else np.random.default_rng(0)

    def control(state, config):
        obs = padded_observation(state.defenders, state.attacker, state.phase.value == 1)
        obs = np.repeat(obs[None, :], config.n_defenders, axis=0)
        a, _, _ = sample_actions(policy, obs, rng, deterministic=deterministic)
        return decode_action(a)

    return control

