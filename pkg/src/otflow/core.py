"""Core rectified-flow machinery: time grids, Euler stepping, noising, codecs.

Time convention: t = 0 is data, t = 1 is noise.  States evolve on the
straight-line interpolation path

    z_t = (1 - t) * z0 + t * eps,

and velocities follow the forward process, dz/dt = eps - x0.  Denoising
therefore integrates with a negative signed step (z_{t-dt} = z_t - dt * v)
and inversion with a positive one; both fall out of z + (t_next - t_now) * v
along a monotone time grid, so a single integrator serves both directions.
"""

from dataclasses import dataclass, field

import numpy as np


class NumericalAbort(RuntimeError):
    """A trajectory produced a non-finite state or velocity.

    Carries the integration time at which the run was aborted.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


def _as_state(x, name="state"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with n_steps + 1 points from t_start to t_end."""

    n_steps: int
    t_start: float
    t_end: float
    points: np.ndarray = field(repr=False)

    @property
    def direction(self):
        """'forward' if time increases along the grid, else 'reverse'."""
        return "forward" if self.t_end > self.t_start else "reverse"

    @property
    def dt(self):
        return abs(self.t_end - self.t_start) / self.n_steps

    def reversed(self):
        """The same grid traversed in the opposite direction."""
        return TimeGrid(self.n_steps, self.t_end, self.t_start, self.points[::-1].copy())


def make_time_grid(n_steps, t_start, t_end):
    """Build a uniform TimeGrid.

    Args:
        n_steps: number of integration steps (>= 1); the grid has n_steps + 1 points.
        t_start: first grid time, in [0, 1].
        t_end: last grid time, in [0, 1]; must differ from t_start.
    """
    if not isinstance(n_steps, (int, np.integer)) or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps!r}")
    for name, t in (("t_start", t_start), ("t_end", t_end)):
        if not (0.0 <= t <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {t}")
    if t_start == t_end:
        raise ValueError("t_start and t_end must differ")
    points = np.linspace(float(t_start), float(t_end), n_steps + 1)
    return TimeGrid(int(n_steps), float(t_start), float(t_end), points)


def euler_step(z, v, signed_step):
    """One explicit Euler step: z + signed_step * v.

    The step sign carries the integration direction; grids hand the integrator
    t_next - t_now, so denoising (t decreasing) subtracts dt * v automatically.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.shape != v.shape:
        raise ValueError(f"state shape {z.shape} != velocity shape {v.shape}")
    if not np.isfinite(signed_step) or signed_step == 0.0:
        raise ValueError(f"signed_step must be finite and nonzero, got {signed_step}")
    out = z + signed_step * v
    if not np.all(np.isfinite(out)):
        raise NumericalAbort("euler_step produced a non-finite state")
    return out


def forward_noising(z0, t, eps):
    """Interpolate toward noise: (1 - t) * z0 + t * eps."""
    z0 = np.asarray(z0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if z0.shape != eps.shape:
        raise ValueError(f"z0 shape {z0.shape} != eps shape {eps.shape}")
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * z0 + t * eps


@dataclass(frozen=True)
class LatentCodec:
    """Invertible elementwise affine map between data space and latent space.

    encode(x) = (x - offset) / scale, decode(z) = z * scale + offset.
    """

    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        scale = _as_state(self.scale, "scale")
        offset = _as_state(self.offset, "offset")
        if scale.shape != offset.shape:
            raise ValueError("scale and offset must have the same shape")
        if np.any(scale == 0.0):
            raise ValueError("codec scale entries must be nonzero")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def identity(cls, dim):
        return cls(np.ones(dim), np.zeros(dim))

    @property
    def dim(self):
        return self.scale.shape[0]

    def encode(self, x):
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def decode(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.offset


@dataclass(frozen=True)
class Trajectory:
    """An integrated path: one record per grid point.

    Record k holds the state at times[k] and the velocity applied to step from
    times[k] to times[k+1]; the final record carries zero velocity.  The
    transport_norms/weights columns are zero for plain (unguided) runs.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    transport_norms: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.times.shape[0]
        for name in ("states", "velocities"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} must have one row per grid point")
        for name in ("transport_norms", "weights"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def dim(self):
        return self.states.shape[-1]


class TrajectoryRecorder:
    """Accumulates per-step records and builds a Trajectory."""

    def __init__(self, z0, grid):
        self.times = [float(grid.points[0])]
        self.states = [np.array(z0, dtype=float)]
        self.velocities = []
        self.transport_norms = []
        self.weights = []

    def step(self, t_next, z_next, v, transport_norm=0.0, weight=0.0):
        self.times.append(float(t_next))
        self.states.append(np.array(z_next, dtype=float))
        self.velocities.append(np.array(v, dtype=float))
        self.transport_norms.append(float(transport_norm))
        self.weights.append(float(weight))

    def build(self, meta=None):
        zero_v = np.zeros_like(self.states[-1])
        return Trajectory(
            times=np.array(self.times),
            states=np.stack(self.states),
            velocities=np.stack(self.velocities + [zero_v]),
            transport_norms=np.array(self.transport_norms + [0.0]),
            weights=np.array(self.weights + [0.0]),
            meta=meta or {},
        )


def integrate(velocity, z0, grid):
    """Explicit Euler integration of dz/dt = velocity(z, t) along a grid.

    Args:
        velocity: callable (state, time) -> velocity, forward-process convention.
        z0: initial state at grid.points[0]; shape (d,) or (batch, d).
        grid: TimeGrid; the signed per-step difference sets the direction.

    Returns:
        Trajectory with n_steps + 1 records.
    """
    z = _as_state(z0)
    rec = TrajectoryRecorder(z, grid)
    pts = grid.points
    for k in range(grid.n_steps):
        t = float(pts[k])
        v = np.asarray(velocity(z, t), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NumericalAbort(f"velocity non-finite at t={t}", t=t)
        z = euler_step(z, v, float(pts[k + 1] - pts[k]))
        rec.step(pts[k + 1], z, v)
    return rec.build()


def rf_invert(velocity, z0, grid):
    """Integrate a data-side state forward to the noise side (inversion).

    The grid must run forward (t increasing); the final record approximates
    the noise-side latent z_T for the standard rectified-flow inversion.
    """
    if grid.direction != "forward":
        raise ValueError("rf_invert requires a forward grid (t increasing)")
    return integrate(velocity, z0, grid)


def denoise(velocity, z_start, grid):
    """Integrate a noise-side state back to the data side (plain denoising)."""
    if grid.direction != "reverse":
        raise ValueError("denoise requires a reverse grid (t decreasing)")
    return integrate(velocity, z_start, grid)
