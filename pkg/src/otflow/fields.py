"""Closed-form oracle velocity fields and condition dispatch.

Every field returns the marginal velocity of the straight-line noising path,

    v(z, t) = E[eps - x0 | z_t = z],

in the forward convention (pointing toward noise).  For an empirical dataset
{x_i} the posterior over points is a softmax of -||z - (1-t) x_i||^2 / (2 t^2)
and each point contributes (z - (1-t) x_i) / t - x_i.  For a Gaussian
N(mu, Sigma) the conditional expectation is linear in z:

    v = (t I - (1-t) Sigma) C^{-1} (z - (1-t) mu) - mu,   C = (1-t)^2 Sigma + t^2 I.

Conditions select which field an evaluation uses: the null condition pools
every registered dataset, a dataset condition blends that entry's field with
the null field at classifier-free guidance weight w, and a reference condition
is the straight-line pull toward a fixed state.
"""

from dataclasses import dataclass

import numpy as np

# Posterior weights smaller than this are flushed to zero before renormalizing.
_WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class GuidanceScales:
    """Classifier-free guidance weights: w for single-condition evaluation,
    w_src / w_tar for the two sides of a coupled edit."""

    w: float = 1.0
    w_src: float = 1.0
    w_tar: float = 1.0

    def __post_init__(self):
        for name in ("w", "w_src", "w_tar"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"guidance scale {name} must be finite")


@dataclass(frozen=True)
class Condition:
    """What a velocity evaluation is conditioned on.

    kind 'null' pools all registered datasets; 'dataset' names one registry
    entry; 'reference' carries a fixed latent state to pull toward.
    """

    kind: str
    name: str = None
    state: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("null", "dataset", "reference"):
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.kind == "dataset" and not self.name:
            raise ValueError("dataset condition requires a name")
        if self.kind == "reference":
            if self.state is None:
                raise ValueError("reference condition requires a state")
            object.__setattr__(self, "state", np.asarray(self.state, dtype=float))

    @classmethod
    def null(cls):
        return cls(kind="null")

    @classmethod
    def dataset(cls, name):
        return cls(kind="dataset", name=name)

    @classmethod
    def reference(cls, state):
        return cls(kind="reference", state=state)


def _clamp_t(t, t_floor):
    if not np.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return min(max(float(t), t_floor), 1.0)


def empirical_marginal_velocity(points, z, t, t_floor=1e-4):
    """Marginal velocity of the uniform empirical distribution over points.

    Args:
        points: dataset array of shape (n, d).
        z: query state, shape (d,) or (batch, d).
        t: time in [0, 1], clamped below at t_floor.
        t_floor: positive clamp keeping the t^2 posterior variance nonzero.
    """
    points = np.asarray(points, dtype=float)
    z = np.asarray(z, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, d) array")
    if z.shape[-1] != points.shape[1]:
        raise ValueError(f"state dim {z.shape[-1]} != dataset dim {points.shape[1]}")
    t = _clamp_t(t, t_floor)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    diffs = zb[:, None, :] - (1.0 - t) * points[None, :, :]  # (b, n, d)
    sq = np.einsum("bnd,bnd->bn", diffs, diffs)
    logits = -sq / (2.0 * t * t)
    logits -= logits.max(axis=1, keepdims=True)  # max-shift for stability
    w = np.exp(logits)
    w[w < _WEIGHT_FLOOR] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    per_point = diffs / t - points[None, :, :]  # eps_i - x_i given z_t = z
    v = np.einsum("bn,bnd->bd", w, per_point)
    return v[0] if single else v


def _gaussian_velocity_eig(mean, eigvals, eigvecs, z, t):
    # v = Q diag((t - a lam) / (a^2 lam + t^2)) Q^T (z - a mu) - mu,  a = 1 - t
    a = 1.0 - t
    gain = (t - a * eigvals) / (a * a * eigvals + t * t)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    y = (zb - a * mean) @ eigvecs
    v = (y * gain) @ eigvecs.T - mean
    return v[0] if single else v


def gaussian_marginal_velocity(mean, cov, z, t, t_floor=1e-4):
    """Marginal velocity for data drawn from N(mean, cov).

    cov must be symmetric positive semidefinite; eigenvalues are clamped at
    zero, so a degenerate covariance degrades gracefully to the point field.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z = np.asarray(z, dtype=float)
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise ValueError(f"cov must be ({d}, {d}), got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("cov must be symmetric")
    if z.shape[-1] != d:
        raise ValueError(f"state dim {z.shape[-1]} != gaussian dim {d}")
    t = _clamp_t(t, t_floor)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() < -1e-8:
        raise ValueError(f"cov is not positive semidefinite (min eigenvalue {eigvals.min()})")
    eigvals = np.clip(eigvals, 0.0, None)
    return _gaussian_velocity_eig(mean, eigvals, eigvecs, z, t)


def conditional_linear_velocity(z_ref, z, t, t_floor=1e-4):
    """Straight-line velocity of the path through z at time t that lands on z_ref.

    v = (z - z_ref) / max(t, t_floor); denoising this field with exact
    integration from any state at t = 1 reaches z_ref at t = 0.
    """
    z_ref = np.asarray(z_ref, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != z_ref.shape[-1]:
        raise ValueError(f"state dim {z.shape[-1]} != reference dim {z_ref.shape[-1]}")
    return (z - z_ref) / max(float(t), t_floor)


def cfg_blend(v_uncond, v_cond, w):
    """Classifier-free guidance blend v_uncond + w * (v_cond - v_uncond).

    w = 0 and w = 1 return the inputs untouched; w > 1 extrapolates.
    """
    if not np.isfinite(w):
        raise ValueError(f"guidance weight must be finite, got {w}")
    v_uncond = np.asarray(v_uncond, dtype=float)
    v_cond = np.asarray(v_cond, dtype=float)
    if v_uncond.shape != v_cond.shape:
        raise ValueError("blend inputs must share a shape")
    if w == 0.0:
        return v_uncond
    if w == 1.0:
        return v_cond
    return v_uncond + w * (v_cond - v_uncond)


class UnknownDatasetError(KeyError):
    pass


class FieldRegistry:
    """Named datasets (point sets and Gaussians) backing oracle fields.

    Register everything up front; entries are treated as immutable afterwards
    (Gaussian eigendecompositions are cached at registration).
    """

    def __init__(self, t_floor=1e-4):
        if not (np.isfinite(t_floor) and t_floor > 0.0):
            raise ValueError(f"t_floor must be positive, got {t_floor}")
        self.t_floor = float(t_floor)
        self._points = {}
        self._gaussians = {}
        self._order = []

    def add_points(self, name, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValueError(f"dataset {name!r}: points must be a non-empty (n, d) array")
        if not np.all(np.isfinite(points)):
            raise ValueError(f"dataset {name!r}: points contain non-finite entries")
        self._check_new(name, points.shape[1])
        self._points[name] = points
        self._order.append(name)
        return self

    def add_gaussian(self, name, mean, cov):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"dataset {name!r}: cov must be ({d}, {d})")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError(f"dataset {name!r}: cov must be symmetric")
        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals.min() < -1e-8:
            raise ValueError(f"dataset {name!r}: cov is not positive semidefinite")
        self._check_new(name, d)
        self._gaussians[name] = (mean, np.clip(eigvals, 0.0, None), eigvecs, cov)
        self._order.append(name)
        return self

    def _check_new(self, name, d):
        if name in self._points or name in self._gaussians:
            raise ValueError(f"dataset {name!r} already registered")
        if self._order and d != self.dim():
            raise ValueError(f"dataset {name!r} has dim {d}, registry has dim {self.dim()}")

    def dim(self):
        first = self._order[0]
        if first in self._points:
            return self._points[first].shape[1]
        return self._gaussians[first][0].shape[0]

    def names(self):
        return list(self._order)

    def has(self, name):
        return name in self._points or name in self._gaussians

    def kind(self, name):
        if name in self._points:
            return "points"
        if name in self._gaussians:
            return "gaussian"
        raise UnknownDatasetError(name)

    def points(self, name):
        if name not in self._points:
            raise UnknownDatasetError(name)
        return self._points[name]

    def gaussian(self, name):
        if name not in self._gaussians:
            raise UnknownDatasetError(name)
        mean, _, _, cov = self._gaussians[name]
        return mean, cov

    def _entry_velocity(self, name, z, t):
        if name in self._points:
            return empirical_marginal_velocity(self._points[name], z, t, self.t_floor)
        if name in self._gaussians:
            mean, eigvals, eigvecs, _ = self._gaussians[name]
            return _gaussian_velocity_eig(mean, eigvals, eigvecs, z, _clamp_t(t, self.t_floor))
        raise UnknownDatasetError(name)

    def _null_velocity(self, z, t):
        if not self._order:
            raise ValueError("registry has no datasets; cannot evaluate the null condition")
        if not self._gaussians:
            pooled = np.concatenate([self._points[n] for n in self._order], axis=0)
            return empirical_marginal_velocity(pooled, z, t, self.t_floor)
        if not self._points and len(self._gaussians) == 1:
            return self._entry_velocity(self._order[0], z, t)
        return self._mixture_velocity(z, t)

    def _mixture_velocity(self, z, t):
        # Uniform pooling at atom level: each point and each whole Gaussian is
        # one mixture component.  Responsibilities need the full log densities
        # (including log-determinants) because component variances differ.
        t = _clamp_t(t, self.t_floor)
        a = 1.0 - t
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        zb = z[None, :] if single else z
        d = zb.shape[1]
        log_dens = []
        comp_v = []
        for name in self._order:
            if name in self._points:
                pts = self._points[name]
                diffs = zb[:, None, :] - a * pts[None, :, :]
                sq = np.einsum("bnd,bnd->bn", diffs, diffs)
                log_dens.append(-sq / (2.0 * t * t) - d * np.log(t))
                comp_v.append(diffs / t - pts[None, :, :])
            else:
                mean, eigvals, eigvecs, _ = self._gaussians[name]
                c_eig = a * a * eigvals + t * t
                y = (zb - a * mean) @ eigvecs
                quad = np.einsum("bd,bd->b", y * (1.0 / c_eig), y)
                logdet = np.log(c_eig).sum()
                log_dens.append((-0.5 * quad - 0.5 * logdet)[:, None])
                comp_v.append(_gaussian_velocity_eig(mean, eigvals, eigvecs, zb, t)[:, None, :])
        log_r = np.concatenate(log_dens, axis=1)
        log_r -= log_r.max(axis=1, keepdims=True)
        r = np.exp(log_r)
        r[r < _WEIGHT_FLOOR] = 0.0
        r /= r.sum(axis=1, keepdims=True)
        v = np.einsum("bn,bnd->bd", r, np.concatenate(comp_v, axis=1))
        return v[0] if single else v


def evaluate(registry, z, t, condition, scales):
    """Dispatch a velocity evaluation through a condition.

    null: pooled field over every registered dataset.  dataset(name): that
    entry's field blended with the null field at scales.w.  reference(state):
    the straight-line pull toward the carried state.
    """
    if condition.kind == "reference":
        return conditional_linear_velocity(condition.state, z, t, registry.t_floor)
    if condition.kind == "null":
        return registry._null_velocity(z, t)
    if not registry.has(condition.name):
        raise UnknownDatasetError(condition.name)
    v_cond = registry._entry_velocity(condition.name, z, t)
    if scales.w == 1.0:
        return v_cond
    v_null = registry._null_velocity(z, t)
    return cfg_blend(v_null, v_cond, scales.w)


def make_velocity(registry, condition, scales):
    """Bind (registry, condition, scales) into a (z, t) -> v callable."""

    def velocity(z, t):
        return evaluate(registry, z, t, condition, scales)

    return velocity
