"""Track a moving target trajectory with a nonnegative control.

The target is driven by an oscillating but positive control. Starting from a
perturbed state we follow the target control, then switch on a local
controller for the last half unit of time. The horizon doubles until the
switch succeeds.
"""
import math

import numpy as np

from quasicontrol import (build_control_mask, build_grid, check_gradient_condition, manufacture_target,
                          solve_steady, track_trajectory, two_plus_sine)

grid = build_grid(1.0, 100)
mask = build_control_mask(grid, (0.2, 0.8), (0.4, 0.6))
law = two_plus_sine()

vbar = lambda t: (1.0 + 0.5 * math.sin(2 * math.pi * t)) * np.ones(grid.n)
ybar0 = solve_steady(law, grid, mask, 1.0).y
target = manufacture_target(law, grid, mask, ybar0, vbar, 0.01, 16.0)

cond = check_gradient_condition(law, target, grid)
print(f"gradient condition: {cond.lhs:.3f} <= {cond.rhs:.3f} -> {cond.passes}")

res = track_trajectory(law, grid, mask, ybar0 + 0.3 * np.sin(math.pi * grid.x), target)
for row in res.log:
    print(f"  T={row['T']:g}: deviation {row['deviation']:.3e}, terminal error {row['terminal_error']:.2e}")
print(f"horizon {res.T:g}, terminal error {res.terminal_error:.2e}, min control {res.min_control:.4f}")
