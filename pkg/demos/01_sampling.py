"""
Sampling by reverse integration
===============================

Register a toy dataset, build its closed-form velocity oracle, and pull a
bank of Gaussian noise back to the data by integrating the flow from t = 1
down to t = 0.  Finer grids land closer; we measure that with the exact
assignment distance.
"""

import numpy as np

from otflow import (Condition, FieldRegistry, GuidanceScales, integrate,
                    make_time_grid, make_velocity, w2_empirical_exact)

rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(0)))

# Eight points on a small circle.  Point datasets give a pooled kernel field
# whose marginals are exact at every t, no training involved.
ang = np.arange(8) * (2 * np.pi / 8)
pts = 0.4 * np.stack([np.cos(ang), np.sin(ang)], axis=1)

reg = FieldRegistry()
reg.add_points("circle", pts)
field = make_velocity(reg, Condition.dataset("circle"), GuidanceScales())


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# Stratify the noise bank over the circle's 8-fold symmetry so every atom
# receives the same share of mass.  A raw bank works too, but then the
# assignment distance bottoms out at the sampling floor instead of falling
# with the grid, which would hide the effect this demo is about.
base = rng.standard_normal((32, 2))
noise = np.concatenate([base @ rot(k * 2 * np.pi / 8).T for k in range(8)], axis=0)
reference = np.repeat(pts, 256 // 8, axis=0)

print("steps   W2(samples, data)")
for n_steps in (25, 50, 100, 200):
    grid = make_time_grid(n_steps, 1.0, 0.0)
    cloud = integrate(field, noise, grid).final_state
    dist, _ = w2_empirical_exact(cloud, reference)
    print(f"{n_steps:5d}   {dist:.6f}")

print("\nThe distance falls as the grid is refined: the oracle field is the")
print("true marginal velocity, so discretization is the only error source.")
