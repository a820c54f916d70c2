"""Shared sampling helpers for the test suite."""
import numpy as np

from borderdefense import engine
from borderdefense.engine import GameState, Phase
from borderdefense.geometry import nash_payoff_multi

# (criterion number, line) pairs collected by test_acceptance, printed by conftest
ACCEPTANCE_LINES: list = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def sample_sensed_state(rng, cfg, y_min=0.05):
    """Random pursuit-phase state in which defender 0 has just sensed the attacker.

    Teammates are uniform over the domain.  States whose equilibrium play
    would leave the unit square (intercept point outside it in x) are
    redrawn: the closed form assumes an unbounded plane.
    """
    nd = cfg.n_defenders
    rho = cfg.defenders[0].sensing_radius
    while True:
        a = np.array([rng.uniform(0, 1), rng.uniform(y_min, 1)])
        r, th = rho * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
        d0 = a + r * np.array([np.cos(th), np.sin(th)])
        ds = np.vstack([d0, rng.uniform(0, 1, (nd - 1, 2))])
        if np.any(ds < 0) or np.any(ds > 1):
            continue
        s = GameState(ds, a, 0, Phase.PURSUIT, 0)
        sol = nash_payoff_multi(engine.pursuit_config(s, cfg))
        p = sol.intercept_point
        if 0.0 <= p.x <= 1.0:
            return s, sol


def gradient_check(seed, eps=1e-6, clip=0.2, batch=16, hidden=2, n_agents=1):
    """Analytic versus central-difference gradient of the full PPO loss.

    Works in float64 on a tiny policy and critic.  Ratios and value deltas
    are drawn away from the clip boundaries, where the loss has kinks.
    Returns the worst relative error ``max|g - g_fd| / max|g_fd|`` over
    the policy and the critic parameter vectors.
    """
    import torch

    from borderdefense.learn import Critic, TeamPolicy, ppo_losses

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    obs_size, state_size = 2, 3
    policy = TeamPolicy(obs_size, n_agents, hidden, shared=True, init_log_std=-0.5).double()
    critic = Critic(state_size, hidden).double()
    # break the near-zero output init so every path carries gradient
    with torch.no_grad():
        for p in list(policy.parameters()) + list(critic.parameters()):
            p.copy_(torch.as_tensor(rng.normal(0, 0.7, p.shape)))

    def away(lo_hi, n):
        out = []
        while len(out) < n:
            v = rng.uniform(*lo_hi)
            if min(abs(v - (1 - clip)), abs(v - (1 + clip))) > 0.05:
                out.append(v)
        return np.array(out)

    obs = torch.as_tensor(rng.uniform(0, 1, (batch, n_agents, obs_size)))
    state = torch.as_tensor(rng.uniform(0, 1, (batch, state_size)))
    with torch.no_grad():
        mu, log_std = policy(obs)
        raw = mu + log_std.exp() * torch.as_tensor(rng.standard_normal(mu.shape))
        logp = -0.5 * ((raw - mu) / log_std.exp()) ** 2 - log_std - 0.5 * np.log(2 * np.pi)
        ratio = torch.as_tensor(away((0.5, 1.5), batch * n_agents).reshape(mu.shape))
        old_logp = logp - torch.log(ratio)
        values = critic(state)
        dv = away((0.5, 1.5), batch) - 1.0  # value delta in (-0.5, 0.5) away from +-clip
        old_values = values - torch.as_tensor(dv)
    b = {
        "obs": obs, "state": state, "raw": raw, "logp": old_logp,
        "adv": torch.as_tensor(rng.normal(0, 1, batch)),
        "values": old_values,
        "returns": torch.as_tensor(rng.normal(0, 1, batch)),
    }

    def loss():
        pol, val, ent = ppo_losses(policy, critic, b, clip)
        return pol + 0.5 * val - 0.01 * ent

    worst = 0.0
    for module in (policy, critic):
        params = list(module.parameters())
        for p in params:
            p.grad = None
        loss().backward()
        analytic = torch.cat([p.grad.reshape(-1) for p in params]).numpy().copy()
        numeric = []
        with torch.no_grad():
            for p in params:
                flat = p.view(-1)
                for k in range(flat.numel()):
                    orig = flat[k].item()
                    flat[k] = orig + eps
                    up = loss().item()
                    flat[k] = orig - eps
                    down = loss().item()
                    flat[k] = orig
                    numeric.append((up - down) / (2 * eps))
        numeric = np.array(numeric)
        worst = max(worst, np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric)))
    return worst


def bbox_span(cfg):
    """Larger side of the bounding box of every dominance disk (the oracle's grid extent)."""
    cs = cfg.circles()
    return max(max(c.center.x + c.radius for c in cs) - min(c.center.x - c.radius for c in cs),
               max(c.center.y + c.radius for c in cs) - min(c.center.y - c.radius for c in cs))
