"""Adaptive metric generators.

Each iteration turns the latest mini-batch gradient into a metric for the
prox step:

* ``adam-diag``        v~_t = r v~_{t-1} + (1 - r) g^2,          A = diag(sqrt(v~_t) + rho)
* ``adabelief-diag``   same with g replaced by the residual g - v_t
* ``adam-global``      b_t = r b_{t-1} + (1 - r) ||g||,          B = (clip(b_t) + rho) I
* ``adabelief-global`` same with ||g - w_t||
* ``constant``         B = scale * I

``r`` is the mixing weight (``varrho``) and ``rho`` the offset, so every
emitted metric has smallest eigenvalue at least ``rho``. The global rules
clip b_t into ``[b_floor, b_cap]`` when emitting; the recursion itself runs
on the unclipped value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import ContractError, check_finite, norm
from .geometry import Metric

__all__ = [
    "AdaptRule",
    "AdaptSpec",
    "AdaptState",
    "update_adam_diag",
    "update_global_norm",
    "update_adabelief",
]

DEBUG_CHECKS = bool(os.environ.get("MINIMAX_GDA_DEBUG"))


class AdaptRule(str, Enum):
    ADAM_DIAG = "adam-diag"
    ADAM_GLOBAL = "adam-global"
    ADABELIEF_DIAG = "adabelief-diag"
    ADABELIEF_GLOBAL = "adabelief-global"
    CONSTANT = "constant"

    @property
    def is_diagonal(self) -> bool:
        return self in (AdaptRule.ADAM_DIAG, AdaptRule.ADABELIEF_DIAG)

    @property
    def is_global(self) -> bool:
        return self in (AdaptRule.ADAM_GLOBAL, AdaptRule.ADABELIEF_GLOBAL)

    @property
    def uses_residual(self) -> bool:
        return self in (AdaptRule.ADABELIEF_DIAG, AdaptRule.ADABELIEF_GLOBAL)


@dataclass(frozen=True)
class AdaptSpec:
    """Configuration of one metric generator."""

    rule: AdaptRule = AdaptRule.CONSTANT
    varrho: float = 0.1
    rho: float = 0.001
    b0: float = 1.0
    b_floor: float = 1e-3
    b_cap: float = 3.0
    a_cap: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rule", AdaptRule(self.rule))
        if not 0.0 < self.varrho < 1.0:
            raise ContractError(f"varrho must lie in (0, 1), got {self.varrho}")
        if not self.rho > 0:
            raise ContractError(f"rho must be positive, got {self.rho}")
        if not 0 < self.b_floor <= self.b_cap:
            raise ContractError("need 0 < b_floor <= b_cap")
        if self.rule.is_global and not self.b0 > 0:
            raise ContractError("global rules need b0 > 0")
        if self.a_cap is not None and self.a_cap < self.rho:
            raise ContractError("a_cap must be at least rho")
        if self.rule is AdaptRule.CONSTANT and self.scale < self.rho:
            raise ContractError("constant metric scale must be at least rho")

    def with_(self, **changes) -> AdaptSpec:
        return replace(self, **changes)

    def metric_bounds(self) -> tuple[float, float] | None:
        """Lower/upper bound on an emitted scalar metric, or None for diagonal rules."""
        if self.rule.is_global:
            return self.b_floor + self.rho, self.b_cap + self.rho
        if self.rule is AdaptRule.CONSTANT:
            return self.scale, self.scale
        return None


class AdaptState:
    """Mutable running statistic for one generator (one per solver run)."""

    def __init__(self, spec: AdaptSpec):
        self.spec = spec
        self.t = 0
        self.second_moment: np.ndarray | None = None  # diagonal rules
        self.b: np.ndarray | None = None  # global rules, unclipped

    def update(self, g: np.ndarray, estimator: np.ndarray | None = None, check: bool = True) -> Metric:
        """Advance one step. ``check=False`` skips input validation (solver inner loop)."""
        rule = self.spec.rule
        if check:
            if rule is AdaptRule.ADAM_DIAG:
                return update_adam_diag(self, g)
            if rule is AdaptRule.ADAM_GLOBAL:
                return update_global_norm(self, g)
            if rule.uses_residual:
                if estimator is None:
                    raise ContractError(f"{rule.value} needs the current estimator")
                return update_adabelief(self, g, estimator)
        elif rule is not AdaptRule.CONSTANT:
            signal = g - estimator if rule.uses_residual else g
            return _global_step(self, signal) if rule.is_global else _diag_step(self, signal)
        self.t += 1
        if self.spec.scale == 1.0:
            return Metric.identity(self.spec.rho)
        lanes = np.shape(g)[:-1]
        return Metric.scalar(np.full(lanes, self.spec.scale), self.spec.rho)


def _emit_diag(state: AdaptState) -> Metric:
    diag = np.sqrt(state.second_moment) + state.spec.rho
    if state.spec.a_cap is not None:
        diag = np.minimum(diag, state.spec.a_cap)
    metric = Metric.diagonal(diag, state.spec.rho)
    if DEBUG_CHECKS:
        assert metric.satisfies_floor()
    return metric


def _emit_scalar(state: AdaptState) -> Metric:
    spec = state.spec
    metric = Metric.scalar(np.clip(state.b, spec.b_floor, spec.b_cap) + spec.rho, spec.rho)
    if DEBUG_CHECKS:
        assert metric.satisfies_floor()
    return metric


def _diag_step(state: AdaptState, signal: np.ndarray) -> Metric:
    r = state.spec.varrho
    if state.second_moment is None:
        state.second_moment = np.zeros_like(signal)
    state.second_moment = r * state.second_moment + (1.0 - r) * (signal * signal)
    state.t += 1
    return _emit_diag(state)


def _global_step(state: AdaptState, signal: np.ndarray) -> Metric:
    r = state.spec.varrho
    if state.b is None:
        state.b = np.full(signal.shape[:-1], state.spec.b0)
    state.b = r * state.b + (1.0 - r) * norm(signal)
    state.t += 1
    return _emit_scalar(state)


def update_adam_diag(state: AdaptState, g) -> Metric:
    """Coordinate-wise second-moment metric driven by the gradient itself."""
    g = np.asarray(g, dtype=np.float64)
    check_finite(g, "gradient")
    return _diag_step(state, g)


def update_global_norm(state: AdaptState, g) -> Metric:
    """Scalar metric from a running average of gradient norms."""
    g = np.asarray(g, dtype=np.float64)
    check_finite(g, "gradient")
    return _global_step(state, g)


def update_adabelief(state: AdaptState, g, estimator) -> Metric:
    """Belief-style metric: statistics of ``g - estimator``.

    Emits a diagonal metric for ``adabelief-diag`` and a scalar one for
    ``adabelief-global``.
    """
    g = np.asarray(g, dtype=np.float64)
    estimator = np.asarray(estimator, dtype=np.float64)
    if g.shape != estimator.shape:
        raise ContractError(f"shape mismatch: gradient {g.shape} vs estimator {estimator.shape}")
    residual = g - estimator
    check_finite(residual, "gradient residual")
    if state.spec.rule is AdaptRule.ADABELIEF_GLOBAL:
        return _global_step(state, residual)
    return _diag_step(state, residual)
