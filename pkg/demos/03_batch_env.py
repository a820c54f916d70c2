"""
The batched environment
=======================

Twenty copies of the game stepped in lock-step.  In GT-assisted mode an
episode stops the moment any defender senses the attacker and pays the
equilibrium payoff of that configuration.
"""
import numpy as np

from borderdefense.engine import GameConfig
from borderdefense.env import BatchEnv

cfg = GameConfig.benchmark(3)
env = BatchEnv(cfg, n_envs=20, mode="gt", seed=0)
print("observation batch", env.observations().shape)

# %%
# Defenders that sweep upward in a line, no learning involved.
rng = np.random.default_rng(0)
finished = []
for _ in range(400):
    up = 0.5 + 0.05 * rng.standard_normal((20, 3))  # heading angle ~ pi/2
    _, rewards, dones, infos = env.batch_step(up)
    finished.extend(infos)

sensed = [i for i in finished if i.sensed]
print(f"{len(finished)} episodes, sensing rate {len(sensed) / len(finished):.2f}")
print(f"mean reward {np.mean([i.reward for i in finished]):.3f}")
print(f"median payoff at sensing {np.median([i.nash_at_sensing for i in sensed]):.3f}")
