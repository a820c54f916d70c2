"""
Where should a third defender stand?
====================================

Sweep one extra defender over the square and record the team's payoff.
Printed as a coarse character map: darker means a better spot.
"""
import numpy as np

from borderdefense.geometry import PursuitConfig, payoff_landscape

fixed = PursuitConfig((0.5, 0.8), (((0.2, 0.3), 3.33), ((0.8, 0.3), 3.33)))
land = payoff_landscape(fixed, 3.33, (0, 1), (0, 1), (40, 20))

# %%
shades = " .:-=+*#%@"
lo, hi = np.nanmin(land.values), np.nanmax(land.values)
for row in land.values[::-1]:
    idx = ((row - lo) / (hi - lo + 1e-12) * (len(shades) - 1)).astype(int)
    print("".join(shades[i] for i in idx))

j, i = np.unravel_index(np.nanargmax(land.values), land.values.shape)
print(f"best spot ({land.xs[i]:.3f}, {land.ys[j]:.3f}) payoff {land.values[j, i]:.3f}")
