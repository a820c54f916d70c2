"""
Training with and without early termination
===========================================

A short MAPPO run in each reward mode on the 1v1 game.  Budgets here are
small so the script finishes in about a minute; see README for the
acceptance-scale runs.
"""
from borderdefense.engine import GameConfig
from borderdefense.env import BatchEnv
from borderdefense.evaluation import evaluate
from borderdefense.learn import TrainConfig, policy_controls, train

cfg = GameConfig.benchmark(1)
frames = 200_000

# %%
results = {}
for mode in ("gt", "standard"):
    run = train(BatchEnv(cfg, 20, mode, seed=0), TrainConfig(total_frames=frames, seed=0))
    last = run.metrics[-1]
    print(f"{mode:8s} final training reward {last['mean_reward']:.3f}  sensing {last['sensing_rate']:.2f}")
    results[mode] = run.learner

# %%
# Evaluate both policies in their own mode with deterministic actions.
for mode, learner in results.items():
    rep = evaluate(policy_controls(learner.policy), cfg, mode, n_episodes=200, seed=1)
    print(f"{mode:8s} eval reward {rep.mean_reward:.3f}  sensing {rep.sensing_rate:.2f}  "
          f"median payoff at sensing {rep.median_nash}")
