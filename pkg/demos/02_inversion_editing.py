"""
Guided inversion editing
========================

Invert an input to its noise code, then denoise it under a target condition
while blending in a reference velocity anchored at a chosen point.  Two knobs
matter here:

  eta    blends target-conditioned and reference velocities inside a window;
  beta0  scales the transport correction added on top of the blend.

The script shows eta steering the output toward the anchor and the transport
knob reshaping the trajectory, with the work spent growing linearly in beta0.
"""

import numpy as np

from otflow import (Condition, FieldRegistry, GuidanceScales,
                    InversionEditConfig, LatentCodec, TransportConfig,
                    make_time_grid, transport_guided_inversion_edit)

reg = FieldRegistry()
reg.add_gaussian("left", np.array([-1.5, 0.0]), 0.16 * np.eye(2))
reg.add_gaussian("right", np.array([1.5, 0.5]), 0.16 * np.eye(2))

grid = make_time_grid(28, 1.0, 0.0)
codec = LatentCodec.identity(2)
x0 = np.array([-1.3, 0.1])

print("Part 1: eta pulls the edit toward the anchor point")
print("eta    |output - anchor|")
for eta in (0.0, 0.25, 0.5, 0.75, 1.0):
    cfg = InversionEditConfig(
        eta=eta,
        transport=TransportConfig(beta0=0.0, phi=0.3, clip_tau=1.0),
        grid=grid,
        condition_target=Condition.dataset("right"),
        scales=GuidanceScales(w=2.0))
    res = transport_guided_inversion_edit(cfg, reg, codec, x0)
    print(f"{eta:.2f}   {np.linalg.norm(res.output - x0):.4f}")

# With eta = 0 the anchor is ignored and the output lands in the right mode.
# With eta = 1 the reference velocity dominates and the output returns to x0.

print("\nPart 2: transport strength reshapes the trajectory")
print("beta0   |output - base|   transport work")
base = None
for beta0 in (0.0, 0.05, 0.1, 0.2):
    cfg = InversionEditConfig(
        eta=0.5,
        transport=TransportConfig(beta0=beta0, phi=0.3, clip_tau=1.0,
                                  orientation="elapsed"),
        grid=grid,
        condition_target=Condition.dataset("right"),
        scales=GuidanceScales(w=2.0))
    res = transport_guided_inversion_edit(cfg, reg, codec, x0)
    if base is None:
        base = res.output
    dev = np.linalg.norm(res.output - base)
    print(f"{beta0:.2f}    {dev:.6f}          {res.summary.transport_work:.6f}")

print("\nDeviation from the unguided output and the work integral both grow")
print("with beta0; the annealing schedule confines the correction to the")
print("early phase of the reverse pass.")
