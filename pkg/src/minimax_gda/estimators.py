"""Recursive gradient estimators for the x-side (v) and y-side (w).

``momentum``:          v+ = a g(x+, y+; B+) + (1 - a) v
``variance-reduced``:  v+ = g(x+, y+; B+) + (1 - a) (v - g(x, y; B+))

The variance-reduced (STORM) correction evaluates the new batch at the old
iterate, so each step costs two batch evaluations instead of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, sqnorm

__all__ = [
    "EstimatorState",
    "init_estimator",
    "momentum_update",
    "storm_update",
    "estimator_error",
]

MOMENTUM = "momentum"
VARIANCE_REDUCED = "variance-reduced"


@dataclass(frozen=True)
class EstimatorState:
    kind: str
    v: np.ndarray
    w: np.ndarray
    prev_x: np.ndarray | None = None
    prev_y: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (MOMENTUM, VARIANCE_REDUCED):
            raise ContractError(f"unknown estimator kind {self.kind!r}")


def init_estimator(kind: str, g: tuple[np.ndarray, np.ndarray], x=None, y=None) -> EstimatorState:
    """Start from the first batch gradient at (x_1, y_1)."""
    gx, gy = g
    if kind == VARIANCE_REDUCED:
        return EstimatorState(kind, gx.copy(), gy.copy(), np.array(x, copy=True), np.array(y, copy=True))
    return EstimatorState(kind, gx.copy(), gy.copy())


def _check_coef(name: str, c: float) -> None:
    if not 0.0 < c <= 1.0:
        raise ContractError(f"{name} must lie in (0, 1], got {c}")


def _mix(coef: float, fresh: np.ndarray, old: np.ndarray) -> np.ndarray:
    if coef == 1.0:
        return fresh.copy()
    return coef * fresh + (1.0 - coef) * old


def momentum_update(state: EstimatorState, g_new, alpha: float, beta: float) -> EstimatorState:
    _check_coef("alpha", alpha)
    _check_coef("beta", beta)
    gx, gy = g_new
    return EstimatorState(state.kind, _mix(alpha, gx, state.v), _mix(beta, gy, state.w))


def _storm(coef: float, fresh: np.ndarray, prev_est: np.ndarray, at_old: np.ndarray) -> np.ndarray:
    if coef == 1.0:
        return fresh.copy()
    return fresh + (1.0 - coef) * (prev_est - at_old)


def storm_update(state: EstimatorState, g_new_at_new, g_new_at_old, alpha: float, beta: float,
                 x_new=None, y_new=None) -> EstimatorState:
    """Variance-reduced update; both gradient pairs must come from the same batch."""
    _check_coef("alpha", alpha)
    _check_coef("beta", beta)
    gx, gy = g_new_at_new
    ox, oy = g_new_at_old
    if gx.shape != ox.shape or gy.shape != oy.shape:
        raise ContractError("new-point and old-point gradients have different shapes")
    return EstimatorState(
        state.kind,
        _storm(alpha, gx, state.v, ox),
        _storm(beta, gy, state.w, oy),
        state.prev_x if x_new is None else x_new,
        state.prev_y if y_new is None else y_new,
    )


def estimator_error(problem, state: EstimatorState, x, y) -> tuple:
    """Squared distances of (v, w) from the exact partial gradients at (x, y)."""
    ex = problem.grad_x_exact(x, y) - state.v
    ey = problem.grad_y_exact(x, y) - state.w
    return sqnorm(ex), sqnorm(ey)
