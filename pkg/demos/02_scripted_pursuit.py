"""
Playing out the pursuit phase
=============================

From a sensed configuration both sides follow the closed-form strategy:
defenders run at the intercept point, the attacker runs for it and then
straight down.  With point capture and a fine step the final height matches
the payoff computed at sensing.
"""
import numpy as np

from borderdefense import engine
from borderdefense.engine import GameConfig, GameState, Mode, Phase

cfg = GameConfig.benchmark(3, dt=0.01, capture_radius=0.0)
state = GameState([[0.45, 0.7], [0.1, 0.2], [0.9, 0.3]], [0.5, 0.9], 0, Phase.PURSUIT, 0)

# %%
predicted = engine.nash_at(state, cfg)
rec = engine.rollout(state, cfg, engine.scripted_policy(), Mode.STANDARD)
print(f"predicted {predicted:.4f}  played {rec.payoff:.4f}  ({rec.terminal.value} after {rec.length} steps)")

# %%
# A real capture radius ends the chase early, a little higher up.
cfg_r = GameConfig.benchmark(3, dt=0.01)
rec_r = engine.rollout(state, cfg_r, engine.scripted_policy(), Mode.STANDARD)
print(f"with capture radius 0.07: {rec_r.payoff:.4f}")

# %%
# Trajectory of the attacker, every 10th step.
for s in rec.states[::10]:
    print(s.step, np.round(s.attacker, 3))
