"""Adaptive gradient descent ascent for stochastic nonconvex-strongly-concave minimax problems."""

from .adapt import AdaptRule, AdaptSpec, AdaptState
from .core import ContractError, MiniBatch, RngStream, UnsupportedCapability, draw_batch
from .estimators import EstimatorState, init_estimator, momentum_update, storm_update
from .geometry import Ball, Box, Metric, Simplex, Unconstrained, generalized_project, gradient_mapping, project
from .problems import PolicyEvalMSPBE, ProblemSpec, QuadraticMinimax, RobustWeightedLoss, StochasticMinimaxProblem
from .solvers import (
    ConfigError,
    NumericalAbort,
    ProblemConstants,
    RunResult,
    Schedule,
    SolverConfig,
    TrajectoryRecord,
    fit_rate_slope,
    run,
    run_lanes,
    suggest_config,
    validate_config,
)

__version__ = "0.1.0"
