"""Constraint sets, adaptive metrics and metric-weighted projections.

The prox step used by both solvers is

    x+ = argmin_{x in X} <v, x> + 1/(2 gamma) (x - x_t)^T A (x - x_t)

which is the A-weighted projection of ``z = x_t - gamma * A^{-1} v`` onto X.
Metrics are identity, scalar or diagonal, so every set below has an exact
(or fixed-point bisection) projection in that weighted norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import ContractError, UnsupportedCapability, as_vector, dot, norm

__all__ = [
    "Unconstrained",
    "Box",
    "Ball",
    "Simplex",
    "ConstraintSet",
    "Metric",
    "project",
    "project_simplex",
    "project_simplex_weighted",
    "project_ball_weighted",
    "generalized_project",
    "bregman_distance",
    "gradient_mapping",
]


@dataclass(frozen=True)
class Unconstrained:
    dim: int

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return np.all(np.isfinite(x), axis=-1)


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower, name="lower")
        hi = as_vector(self.upper, lo.shape[-1], name="upper")
        if lo.ndim != 1 or np.any(lo > hi):
            raise ContractError("box needs 1-D bounds with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_vector(self.center, name="center")
        if c.ndim != 1 or not self.radius > 0:
            raise ContractError("ball needs a 1-D center and a positive radius")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return norm(np.asarray(x) - self.center) <= self.radius + tol


@dataclass(frozen=True)
class Simplex:
    dim: int

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x)
        return np.all(x >= -tol, axis=-1) & (np.abs(np.sum(x, axis=-1) - 1.0) <= tol)


ConstraintSet = Union[Unconstrained, Box, Ball, Simplex]


@dataclass(frozen=True, eq=False)
class Metric:
    """A positive-definite diagonal scaling ``A``.

    ``kind`` is "identity", "scalar" or "diagonal". ``value`` is unused for
    identity, has shape ``lanes`` for scalar and ``lanes + (d,)`` for
    diagonal metrics.
    """

    kind: str
    value: np.ndarray | float = 1.0
    rho_floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "scalar", "diagonal"):
            raise UnsupportedCapability(f"metric kind {self.kind!r} is not supported")

    @classmethod
    def identity(cls, rho_floor: float = 0.0) -> Metric:
        return cls("identity", 1.0, rho_floor)

    @classmethod
    def scalar(cls, b, rho_floor: float = 0.0) -> Metric:
        return cls("scalar", np.asarray(b, dtype=np.float64), rho_floor)

    @classmethod
    def diagonal(cls, diag, rho_floor: float = 0.0) -> Metric:
        return cls("diagonal", np.asarray(diag, dtype=np.float64), rho_floor)

    @property
    def weights(self):
        """Per-coordinate weights broadcastable against ``(..., d)``."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "scalar":
            return self.value[..., None]
        return self.value

    def lambda_min(self):
        if self.kind == "identity":
            return 1.0
        if self.kind == "scalar":
            return self.value
        return np.min(self.value, axis=-1)

    def lambda_max(self):
        if self.kind == "identity":
            return 1.0
        if self.kind == "scalar":
            return self.value
        return np.max(self.value, axis=-1)

    def satisfies_floor(self) -> bool:
        return bool(np.all(self.lambda_min() >= self.rho_floor))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ks = np.arange(1, d + 1, dtype=np.float64)
    positive = u - css / ks > 0
    # largest index where the threshold test holds
    r = d - 1 - np.argmax(positive[..., ::-1], axis=-1)
    tau = np.take_along_axis(css, r[..., None], axis=-1) / (r[..., None] + 1.0)
    return np.maximum(v - tau, 0.0)


def project_simplex_weighted(z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """argmin over the simplex of sum_i a_i (x_i - z_i)^2, for a > 0.

    The minimizer is ``x_i = max(z_i - tau / a_i, 0)``. The multiplier tau
    is found exactly: the breakpoints ``a_i z_i`` are sorted and the active
    set is the longest prefix whose closed-form tau stays below its own
    breakpoint.
    """
    z = np.asarray(z, dtype=np.float64)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), z.shape)
    d = z.shape[-1]
    brk = a * z
    order = np.argsort(-brk, axis=-1, kind="stable")
    brk_s = np.take_along_axis(brk, order, axis=-1)
    z_s = np.take_along_axis(z, order, axis=-1)
    inv_s = 1.0 / np.take_along_axis(a, order, axis=-1)
    taus = (np.cumsum(z_s, axis=-1) - 1.0) / np.cumsum(inv_s, axis=-1)
    active = brk_s > taus
    r = d - 1 - np.argmax(active[..., ::-1], axis=-1)
    tau = np.take_along_axis(taus, r[..., None], axis=-1)
    return np.maximum(z - tau / a, 0.0)


def _bisect_lanes(fn, lo: np.ndarray, hi: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Largest-root-side bisection of a decreasing ``fn`` with fn(lo) > 0 >= fn(hi).

    Stops when every lane's bracket has collapsed to adjacent doubles, so a
    lane's answer never depends on which other lanes are solved with it.
    Returns the feasible (upper) end of each bracket.
    """
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        moving = (mid > lo) & (mid < hi)
        if not np.any(moving):
            break
        pos = fn(mid) > 0
        lo = np.where(moving & pos, mid, lo)
        hi = np.where(moving & ~pos, mid, hi)
    return hi


def project_ball_weighted(z: np.ndarray, a, center: np.ndarray, radius: float) -> np.ndarray:
    """argmin over ||x - c|| <= r of sum_i a_i (x_i - z_i)^2.

    Outside the ball the minimizer is ``c + a (z - c) / (a + nu)`` with the
    multiplier nu > 0 chosen so the point lands on the sphere.
    """
    z = np.asarray(z, dtype=np.float64)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), z.shape)
    dz = z - center
    dist = norm(dz)
    outside = np.asarray(dist > radius)
    if not np.any(outside):
        return z.copy()

    def excess(nu):
        return norm(a * dz / (a + nu[..., None])) - radius

    hi = np.where(outside, np.max(a, axis=-1) * dist / radius, 0.0)
    nu = _bisect_lanes(excess, np.zeros_like(hi), hi)
    x = center + a * dz / (a + nu[..., None])
    # the bracket end is feasible up to rounding; pin it onto the sphere
    r = norm(x - center)
    scale = np.where(r > radius, radius / np.where(r > 0, r, 1.0), 1.0)
    x = center + (x - center) * scale[..., None]
    return np.where(outside[..., None], x, z)


def project(cset: ConstraintSet, v) -> np.ndarray:
    """Euclidean projection onto ``cset``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != cset.dim:
        raise ContractError(f"dimension mismatch: set has {cset.dim}, vector {v.shape[-1]}")
    if isinstance(cset, Unconstrained):
        return v.copy()
    if isinstance(cset, Box):
        return np.clip(v, cset.lower, cset.upper)
    if isinstance(cset, Ball):
        dv = v - cset.center
        r = np.asarray(norm(dv))
        scale = np.where(r > cset.radius, cset.radius / np.where(r > 0, r, 1.0), 1.0)
        return np.where((r > cset.radius)[..., None], cset.center + dv * scale[..., None], v)
    if isinstance(cset, Simplex):
        return project_simplex(v)
    raise UnsupportedCapability(f"no projection for {type(cset).__name__}")


def generalized_project(cset: ConstraintSet, x_t, v, metric: Metric, gamma: float) -> np.ndarray:
    """Minimizer of <v, x> + (1/(2 gamma)) (x - x_t)^T A (x - x_t) over ``cset``."""
    if not gamma > 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    x_t = np.asarray(x_t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x_t.shape[-1] != v.shape[-1]:
        raise ContractError(f"dimension mismatch: {x_t.shape[-1]} vs {v.shape[-1]}")
    w = metric.weights
    z = x_t - gamma * (v / w)
    if metric.kind != "diagonal" or isinstance(cset, Unconstrained):
        # a scalar metric leaves the Euclidean projection unchanged
        return project(cset, z)
    if z.shape[-1] != cset.dim:
        raise ContractError(f"dimension mismatch: set has {cset.dim}, vector {z.shape[-1]}")
    if isinstance(cset, Box):
        return np.clip(z, cset.lower, cset.upper)
    if isinstance(cset, Simplex):
        return project_simplex_weighted(z, w)
    if isinstance(cset, Ball):
        return project_ball_weighted(z, w, cset.center, cset.radius)
    raise UnsupportedCapability(f"no weighted projection for {type(cset).__name__}")


def bregman_distance(metric: Metric, x, x_t):
    """D(x, x_t) = 1/2 (x - x_t)^T A (x - x_t)."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(x_t, dtype=np.float64)
    return 0.5 * dot(diff * metric.weights, diff)


def gradient_mapping(cset: ConstraintSet, x_t, g, metric: Metric, gamma: float) -> np.ndarray:
    """(x_t - x+) / gamma where x+ is the prox step along ``g``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    return (x_t - generalized_project(cset, x_t, g, metric, gamma)) / gamma
