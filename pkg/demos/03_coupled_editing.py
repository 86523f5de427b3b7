"""
Coupled-trajectory editing with transport guidance
==================================================

The inversion-free editor never leaves data space: at every step it renoises
the source, evaluates source- and target-conditioned velocities at the
coupled state, and integrates their difference.  The transport term adds a
pull proportional to the displacement from the source anchor.

We edit 64 samples of a left mode toward a right mode and measure the exact
assignment distance between the edited cloud and fresh target samples.  The
distance falls monotonically as the transport strength rises.
"""

import numpy as np

from otflow import (Condition, FieldRegistry, FlowEditConfig, GuidanceScales,
                    LatentCodec, TransportConfig, derive_seed, make_time_grid,
                    transport_enhanced_flowedit, w2_empirical_exact)

SEED = 7
reg = FieldRegistry()
reg.add_gaussian("source", np.array([-2.0, 0.0]), 0.16 * np.eye(2))
reg.add_gaussian("target", np.array([2.0, 0.0]), 0.16 * np.eye(2))

grid = make_time_grid(28, 1.0, 0.0)
codec = LatentCodec.identity(2)
scales = GuidanceScales(w_src=1.5, w_tar=5.5)

rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([SEED, 1])))
inputs = rng.multivariate_normal([-2.0, 0.0], 0.16 * np.eye(2), size=64)
trng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([SEED, 2])))
targets = trng.multivariate_normal([2.0, 0.0], 0.16 * np.eye(2), size=64)

print("beta    W2(edits, target)   mean x of edits")
for beta in (0.0, 0.3, 0.7, 1.0):
    tcfg = TransportConfig(beta0=beta, phi=1.0, clip_tau=1.0,
                           orientation="remaining")
    outs = []
    for i, x0 in enumerate(inputs):
        cfg = FlowEditConfig(transport=tcfg, grid=grid,
                             cond_src=Condition.dataset("source"),
                             cond_tar=Condition.dataset("target"),
                             scales=scales, seed=derive_seed(SEED, i, 0),
                             n_avg=1, n_max=24, n_min=0)
        outs.append(transport_enhanced_flowedit(cfg, reg, codec, x0).output)
    outs = np.array(outs)
    dist, _ = w2_empirical_exact(outs, targets)
    print(f"{beta:.1f}     {dist:.4f}              {outs[:, 0].mean():+.3f}")

print("\nEach input keeps its own noise stream (seed derived per index), so")
print("the only thing changing between rows is the transport strength.")
