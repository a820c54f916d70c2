"""
Equilibrium payoff of the pursuit game
======================================

One fast defender against one attacker.  The attacker wins the points it can
reach before the defender; the set it can reach first is a disk, and its best
move is the disk's lowest point.
"""
import numpy as np

from borderdefense.geometry import apollonius_circle, nash_payoff_multi, nash_payoff_oracle, nash_payoff_single, PursuitConfig

# %%
# The dominance disk for a defender 3.33 times faster than the attacker.
attacker, defender, nu = (0.5, 0.95), (0.5, 0.05), 3.33
circle = apollonius_circle(attacker, defender, nu)
print("center", np.round(circle.center, 4), "radius", round(circle.radius, 4))

sol = nash_payoff_single(attacker, defender, nu)
print("payoff", round(sol.payoff, 4), "intercept", np.round(sol.intercept_point, 4))

# %%
# A second defender can only shrink the attacker's safe region,
# so the payoff never drops below the better single-defender value.
two = PursuitConfig(attacker, ((defender, nu), ((0.8, 0.6), 2.5)))
multi = nash_payoff_multi(two)
print("two defenders", round(multi.payoff, 4))

# the brute-force grid search agrees to within its resolution
print("grid oracle  ", round(nash_payoff_oracle(two, 2000), 4))

# %%
# Payoff is clamped at the border: a deep disk means the attacker breaches.
print(nash_payoff_single((0.5, 0.2), (0.5, 0.9), 3.33))
