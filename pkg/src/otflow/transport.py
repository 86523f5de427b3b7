"""Transport guidance: pull a trajectory along the displacement toward a target.

The guidance direction at time t is the straight-line transport rate

    d(z, t) = (z_target - z) / max(T - t, delta),        T = 1,

norm-clipped at clip_tau, and weighted by a cosine-annealed schedule

    S(s) = 0.5 * (1 + cos(min(s / phi, 1) * pi)),        s in [0, 1],

so the per-step correction is weight(t) * clip(d).  The schedule argument is
the elapsed denoising fraction (1 - t) or the remaining fraction (t),
selected by TransportConfig.orientation; a hard [t_lo, t_hi] window gates the
weight to zero outside.  S decays from 1 at s = 0 to 0 at s >= phi with
maximum slope pi / (2 * phi).
"""

import math
from dataclasses import dataclass

import numpy as np

_ORIENTATIONS = ("elapsed", "remaining")


@dataclass(frozen=True)
class TransportConfig:
    """Dials for the transport correction.

    window is (t_hi, t_lo): guidance is active only for t in [t_lo, t_hi].
    """

    beta0: float
    phi: float = 0.3
    delta: float = 0.01
    clip_tau: float = 10.0
    orientation: str = "elapsed"
    window: tuple = (1.0, 0.0)

    def __post_init__(self):
        if not (np.isfinite(self.beta0) and self.beta0 >= 0.0):
            raise ValueError(f"beta0 must be finite and >= 0, got {self.beta0}")
        if not (0.0 < self.phi <= 1.0):
            raise ValueError(f"phi must lie in (0, 1], got {self.phi}")
        if not (np.isfinite(self.delta) and self.delta > 0.0):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not (np.isfinite(self.clip_tau) and self.clip_tau > 0.0):
            raise ValueError(f"clip_tau must be positive, got {self.clip_tau}")
        if self.orientation not in _ORIENTATIONS:
            raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
        t_hi, t_lo = self.window
        if not (0.0 <= t_lo <= t_hi <= 1.0):
            raise ValueError(f"window must satisfy 0 <= t_lo <= t_hi <= 1, got {self.window}")


@dataclass(frozen=True)
class GuidanceSample:
    """Diagnostics for one guidance evaluation.

    direction is the clipped transport direction actually applied; raw_norm is
    the pre-clip norm.  When active is False the weight is zero and the base
    velocity passed through untouched.
    """

    t: float
    direction: np.ndarray
    raw_norm: float
    weight: float
    active: bool


def cosine_schedule(s, phi):
    """Annealing factor S(s) = 0.5 * (1 + cos(min(s/phi, 1) * pi)).

    Args:
        s: schedule argument in [0, 1].
        phi: anneal width in (0, 1]; S reaches 0 at s = phi and stays there.
    """
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"schedule argument must lie in [0, 1], got {s}")
    if not (0.0 < phi <= 1.0):
        raise ValueError(f"phi must lie in (0, 1], got {phi}")
    return 0.5 * (1.0 + math.cos(min(s / phi, 1.0) * math.pi))


def transport_direction(z, z_target, t, delta):
    """Straight-line transport rate (z_target - z) / max(1 - t, delta)."""
    z = np.asarray(z, dtype=float)
    z_target = np.asarray(z_target, dtype=float)
    if z.shape != z_target.shape:
        raise ValueError(f"state shape {z.shape} != target shape {z_target.shape}")
    if not (np.isfinite(delta) and delta > 0.0):
        raise ValueError(f"delta must be positive, got {delta}")
    return (z_target - z) / max(1.0 - t, delta)


def adaptive_weight(t, cfg):
    """Schedule weight at time t: beta0 * S(arg, phi), zero outside the window.

    The schedule argument is 1 - t for the 'elapsed' orientation (strong early
    in denoising) and t for 'remaining' (strong near the data end).
    """
    t_hi, t_lo = cfg.window
    if not (t_lo <= t <= t_hi):
        return 0.0
    s = (1.0 - t) if cfg.orientation == "elapsed" else t
    return cfg.beta0 * cosine_schedule(s, cfg.phi)


def clip_norm(v, tau):
    """Rescale v to euclidean norm tau when it exceeds tau; else return v as is."""
    if not (np.isfinite(tau) and tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau}")
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=v.ndim > 1)
    if v.ndim == 1:
        return v if n <= tau else v * (tau / n)
    return np.where(n > tau, v * (tau / np.maximum(n, 1e-300)), v)


def enhance_velocity(v_base, z, z_target, t, cfg):
    """Add the weighted, clipped transport correction to a base velocity.

    Returns (enhanced velocity, GuidanceSample).  Whenever the weight is zero
    (beta0 = 0, t outside the window, schedule annealed away) or the state
    already coincides with the target, v_base is returned bit-exactly.
    """
    v_base = np.asarray(v_base, dtype=float)
    w = adaptive_weight(t, cfg)
    if w == 0.0:
        zero = np.zeros_like(v_base)
        return v_base, GuidanceSample(t=float(t), direction=zero, raw_norm=0.0, weight=0.0, active=False)
    d = transport_direction(z, z_target, t, cfg.delta)
    raw_norm = float(np.linalg.norm(d))
    if raw_norm == 0.0:
        return v_base, GuidanceSample(t=float(t), direction=d, raw_norm=0.0, weight=0.0, active=False)
    clipped = clip_norm(d, cfg.clip_tau)
    sample = GuidanceSample(t=float(t), direction=clipped, raw_norm=raw_norm, weight=w, active=True)
    return v_base + w * clipped, sample
