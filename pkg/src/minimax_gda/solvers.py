"""Adaptive gradient descent ascent solvers.

Three algorithms share one driver:

* ``adagda``     prox steps in adaptive metrics, momentum estimators
                 (alpha_{t+1} = c1 eta_t, beta_{t+1} = c2 eta_t), 2q oracle calls per step
* ``vr-adagda``  same steps, STORM estimators (alpha_{t+1} = c1 eta_t^2),
                 4q oracle calls per step after the first
* ``sgda``       textbook projected stochastic GDA with step sizes gamma*eta_t, lambda*eta_t

Runs are laned: ``run_lanes`` advances one independent trajectory per seed
in a single vectorized loop, and a lane's trajectory is bit-identical to
the one ``run`` produces for that seed alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .adapt import AdaptRule, AdaptSpec, AdaptState
from .core import ContractError, RngStream, norm, sqnorm
from .estimators import (
    MOMENTUM,
    VARIANCE_REDUCED,
    estimator_error,
    init_estimator,
    momentum_update,
    storm_update,
)
from .geometry import Metric, generalized_project, gradient_mapping, project
from .problems import StochasticMinimaxProblem

__all__ = [
    "ConfigError",
    "NumericalAbort",
    "Schedule",
    "eta_schedule",
    "SolverConfig",
    "TrajectoryRecord",
    "RunResult",
    "CSV_COLUMNS",
    "ProblemConstants",
    "Check",
    "ValidationReport",
    "validate_config",
    "suggest_config",
    "corollary_batch_size",
    "lyapunov_constant",
    "run",
    "run_lanes",
    "step_adagda",
    "step_vr_adagda",
    "fit_rate_slope",
    "running_average_curve",
    "oracle_calls",
    "iterations_for_budget",
]

ALGOS = ("adagda", "vr-adagda", "sgda")
SAMPLE_STREAM = 0
OUTPUT_STREAM = 1
DIVERGENCE_LIMIT = 1e12

CSV_COLUMNS = (
    "t", "eta", "alpha", "beta", "grad_map_norm", "grad_F_norm", "y_gap",
    "v_err", "w_err", "a_min", "a_max", "b_t", "oracle_calls",
)


class ConfigError(ContractError):
    """Solver configuration is invalid (not merely outside theorem conditions)."""


class NumericalAbort(RuntimeError):
    def __init__(self, t: int, seeds, x, y, reason: str):
        super().__init__(f"iteration {t}: {reason} (seeds {list(seeds)})")
        self.t = t
        self.seeds = list(seeds)
        self.last_x = x
        self.last_y = y


@dataclass(frozen=True)
class Schedule:
    """eta_t = k / (m + t)^(1/2) ("poly-half"), k / (m + t)^(1/3) ("poly-third") or a constant."""

    kind: str = "constant"
    k: float = 1.0
    m: float = 1.0
    eta: float = 0.9

    def __post_init__(self):
        if self.kind not in ("poly-half", "poly-third", "constant"):
            raise ConfigError(f"unknown schedule {self.kind!r}")

    @property
    def power(self) -> float:
        return 0.5 if self.kind == "poly-half" else 1.0 / 3.0

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.eta
        return self.k / (self.m + t) ** self.power

    def check(self) -> None:
        if self.kind == "constant":
            if not 0.0 < self.eta <= 1.0:
                raise ConfigError(f"constant eta must lie in (0, 1], got {self.eta}")
            return
        if not self.k > 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if not self.m >= 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self(0) > 1.0:
            raise ConfigError(f"eta_0 = {self(0):.6g} exceeds 1 (need m >= k^{1 / self.power:.0f})")


def eta_schedule(schedule: Schedule, t: int) -> float:
    if t < 0:
        raise ContractError("t must be non-negative")
    schedule.check()
    return schedule(t)


@dataclass(frozen=True)
class SolverConfig:
    algo: str = "adagda"
    gamma: float = 0.01
    lam: float = 0.01
    schedule: Schedule = field(default_factory=Schedule)
    c1: float = 1.0
    c2: float = 1.0
    q: int = 1
    T: int = 1000
    adapt_x: AdaptSpec = field(default_factory=lambda: AdaptSpec(AdaptRule.ADAM_DIAG))
    adapt_y: AdaptSpec = field(default_factory=lambda: AdaptSpec(AdaptRule.ADAM_GLOBAL))
    output_rule: str = "final"
    log_stride: int | None = None
    checkpoints_per_decade: int = 10
    track_average: bool = True

    def with_(self, **changes) -> SolverConfig:
        return replace(self, **changes)

    def coefficients(self, eta: float) -> tuple[float, float]:
        """(alpha_{t+1}, beta_{t+1}) for the step that uses eta_t."""
        if self.algo == "vr-adagda":
            e2 = eta * eta
            return self.c1 * e2, self.c2 * e2
        return self.c1 * eta, self.c2 * eta

    def check(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if not (self.gamma >= 0 and self.lam >= 0):
            raise ConfigError("gamma and lambda must be non-negative (0 freezes that variable)")
        if not (isinstance(self.q, int) and self.q >= 1):
            raise ConfigError(f"batch size q must be a positive integer, got {self.q}")
        if not (isinstance(self.T, int) and self.T >= 0):
            raise ConfigError(f"T must be a non-negative integer, got {self.T}")
        if self.output_rule not in ("final", "uniform"):
            raise ConfigError(f"output_rule must be 'final' or 'uniform', got {self.output_rule!r}")
        if self.log_stride is not None and self.log_stride < 1:
            raise ConfigError("log_stride must be positive")
        self.schedule.check()
        if self.algo != "sgda" and self.T > 1:
            # eta is non-increasing, so the first step has the largest coefficients
            a, b = self.coefficients(self.schedule(1))
            if not (0.0 < a <= 1.0 and 0.0 < b <= 1.0):
                raise ConfigError(f"alpha={a:.6g}, beta={b:.6g} at t=1 fall outside (0, 1]")


def oracle_calls(algo: str, q: int, t: int) -> int:
    """Cumulative stochastic-gradient evaluations after reaching iterate t."""
    if t <= 0:
        return 0
    if algo == "vr-adagda":
        return 2 * q + 4 * q * (t - 1)
    return 2 * q * t


def iterations_for_budget(algo: str, q: int, budget: int) -> int:
    """Largest T whose cumulative oracle count stays within ``budget``."""
    if budget < 2 * q:
        return 0
    if algo == "vr-adagda":
        return 1 + (budget - 2 * q) // (4 * q)
    return budget // (2 * q)


# ---------------------------------------------------------------------------
# theorem conditions


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    l_f: float
    b: float
    b_hat: float
    rho: float

    def __post_init__(self):
        for name in ("mu", "l_f", "b", "b_hat", "rho"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")

    @property
    def kappa(self) -> float:
        return self.l_f / self.mu

    @property
    def l_primal(self) -> float:
        return self.l_f * (1.0 + self.kappa)

    @classmethod
    def from_problem(cls, problem: StochasticMinimaxProblem, config: SolverConfig) -> ProblemConstants:
        ax = config.adapt_x
        rho = ax.scale if ax.rule is AdaptRule.CONSTANT else ax.rho
        bounds = config.adapt_y.metric_bounds()
        if bounds is None:
            bounds = (config.adapt_y.rho, math.inf)
        return cls(problem.spec.mu, problem.spec.l_f, bounds[0], bounds[1], rho)


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    op: str
    rhs: float
    passed: bool

    def line(self) -> str:
        mark = "ok  " if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.lhs:.6g} {self.op} {self.rhs:.6g}"


@dataclass
class ValidationReport:
    theorem: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        head = f"{self.theorem}: {'all conditions hold' if self.passed else f'{len(self.violations)} violated'}"
        return "\n".join([head] + ["  " + c.line() for c in self.checks])


_REL_TOL = 1e-12


def _check(name: str, lhs: float, op: str, rhs: float) -> Check:
    slack = _REL_TOL * max(abs(lhs), abs(rhs))
    if op == ">":
        ok = lhs > rhs
    elif op == "<=":
        ok = lhs <= rhs + slack
    elif op == ">=":
        ok = lhs >= rhs - slack
    elif op == "==":
        ok = abs(lhs - rhs) <= slack
    else:
        raise ValueError(op)
    return Check(name, float(lhs), op, float(rhs), bool(ok))


def _gamma_bounds_momentum(c: ProblemConstants, lam: float, m: float, k: float) -> tuple[float, float]:
    mu, lf = c.mu, c.l_f
    first = (15.0 * math.sqrt(2.0) * lam * mu**2 * c.rho) / (
        2.0 * math.sqrt(400.0 * lf**2 * lam**2 + 24.0 * mu**2 * lam**2
                        + 16875.0 * c.b_hat**2 * c.kappa**2 * lf**2 * mu**2))
    second = math.sqrt(m) * c.rho / (4.0 * c.l_primal * k)
    return first, second


def _lambda_bounds_momentum(c: ProblemConstants) -> tuple[float, float]:
    mu, lf = c.mu, c.l_f
    first = 405.0 * c.b * lf**2 * mu**1.5 / (8.0 * math.sqrt(50.0 * lf**2 + 9.0 * mu**2))
    return first, c.b / (6.0 * lf)


def _gamma_bounds_vr(c: ProblemConstants, lam: float, m: float, k: float, q: int) -> tuple[float, float]:
    first = c.rho * lam * c.mu * math.sqrt(q) / (
        c.l_f * math.sqrt(32.0 * lam**2 + 150.0 * q * c.kappa**2 * c.b_hat**2))
    second = m ** (1.0 / 3.0) * c.rho / (2.0 * c.l_primal * k)
    return first, second


def _lambda_bounds_vr(c: ProblemConstants, q: int) -> tuple[float, float]:
    return 27.0 * c.mu * c.b * q / 32.0, c.b / (6.0 * c.l_f)


def validate_config(config: SolverConfig, constants: ProblemConstants, *,
                    y_metric_scalar: bool | None = None, nu: float | None = None) -> ValidationReport:
    """Evaluate every step-size condition of the convergence theorem matching ``config.algo``.

    Reporting only: nothing here raises on a violated condition.
    """
    c = constants
    s = config.schedule
    k, m = s.k, s.m
    checks: list[Check] = []
    if y_metric_scalar is None:
        y_metric_scalar = not config.adapt_y.rule.is_diagonal
    checks.append(_check("y-side metric is a scalar multiple of I", float(y_metric_scalar), "==", 1.0))
    checks.append(_check("b_hat >= b (y-metric bounds)", c.b_hat, ">=", c.b))

    if config.algo == "adagda":
        theorem = "momentum (poly-half) conditions"
        checks.append(_check("schedule is poly-half", float(s.kind == "poly-half"), "==", 1.0))
        checks.append(_check("m >= k^2", m, ">=", k**2))
        checks.append(_check("m >= (c1 k)^2", m, ">=", (config.c1 * k) ** 2))
        checks.append(_check("m >= (c2 k)^2", m, ">=", (config.c2 * k) ** 2))
        checks.append(_check("c1 >= 9 mu^2 / 4", config.c1, ">=", 9.0 * c.mu**2 / 4.0))
        checks.append(_check("c1 <= m^(1/2) / k", config.c1, "<=", math.sqrt(m) / k))
        checks.append(_check("c2 >= 75 L_f^2 / 2", config.c2, ">=", 75.0 * c.l_f**2 / 2.0))
        checks.append(_check("c2 <= m^(1/2) / k", config.c2, "<=", math.sqrt(m) / k))
        g1, g2 = _gamma_bounds_momentum(c, config.lam, m, k)
        l1, l2 = _lambda_bounds_momentum(c)
        checks.append(_check("gamma > 0", config.gamma, ">", 0.0))
        checks.append(_check("gamma <= coupling bound", config.gamma, "<=", g1))
        checks.append(_check("gamma <= m^(1/2) rho / (4 L k)", config.gamma, "<=", g2))
        checks.append(_check("lambda > 0", config.lam, ">", 0.0))
        checks.append(_check("lambda <= 405 b L_f^2 mu^1.5 / (8 sqrt(50 L_f^2 + 9 mu^2))", config.lam, "<=", l1))
        checks.append(_check("lambda <= b / (6 L_f)", config.lam, "<=", l2))
    elif config.algo == "vr-adagda":
        theorem = "variance-reduced (poly-third) conditions"
        q = config.q
        base = 2.0 / (3.0 * k**3)
        checks.append(_check("schedule is poly-third", float(s.kind == "poly-third"), "==", 1.0))
        checks.append(_check("c1 >= 2/(3k^3) + 9 mu^2 / 4", config.c1, ">=", base + 9.0 * c.mu**2 / 4.0))
        checks.append(_check("c2 >= 2/(3k^3) + 75 L_f^2 / 2", config.c2, ">=", base + 75.0 * c.l_f**2 / 2.0))
        checks.append(_check("m >= k^3", m, ">=", k**3))
        checks.append(_check("m >= (c1 k)^3", m, ">=", (config.c1 * k) ** 3))
        checks.append(_check("m >= (c2 k)^3", m, ">=", (config.c2 * k) ** 3))
        l1, l2 = _lambda_bounds_vr(c, q)
        g1, g2 = _gamma_bounds_vr(c, config.lam, m, k, q)
        checks.append(_check("lambda > 0", config.lam, ">", 0.0))
        checks.append(_check("lambda <= 27 mu b q / 32", config.lam, "<=", l1))
        checks.append(_check("lambda <= b / (6 L_f)", config.lam, "<=", l2))
        checks.append(_check("gamma > 0", config.gamma, ">", 0.0))
        checks.append(_check("gamma <= coupling bound", config.gamma, "<=", g1))
        checks.append(_check("gamma <= m^(1/3) rho / (2 L k)", config.gamma, "<=", g2))
        if nu is not None:
            qn = corollary_batch_size(c, nu)
            checks.append(_check("q >= kappa^nu (large-batch regime)", q, ">=", qn))
            checks.append(_check("q <= 16 / (81 L_f mu)", q, "<=", 16.0 / (81.0 * c.l_f * c.mu)))
    else:
        theorem = "sgda (no adaptive conditions)"
    return ValidationReport(theorem, checks)


def corollary_batch_size(constants: ProblemConstants, nu: float) -> int:
    """Batch size kappa^nu for the large-batch variance-reduced regime (rounded up)."""
    if not nu > 0:
        raise ContractError("nu must be positive")
    return max(1, math.ceil(constants.kappa**nu - 1e-9))


def suggest_config(base: SolverConfig, constants: ProblemConstants, k: float = 1.0) -> SolverConfig:
    """Fill schedule, c1, c2, lambda, gamma with the extreme values the theorem allows.

    c1, c2 and m sit at their lower bounds, lambda and gamma at their upper
    bounds, for the theorem matching ``base.algo``.
    """
    c = constants
    if base.algo == "adagda":
        c1 = 9.0 * c.mu**2 / 4.0
        c2 = 75.0 * c.l_f**2 / 2.0
        m = max(k**2, (c1 * k) ** 2, (c2 * k) ** 2)
        lam = min(_lambda_bounds_momentum(c))
        gamma = min(_gamma_bounds_momentum(c, lam, m, k))
        return base.with_(schedule=Schedule("poly-half", k, m), c1=c1, c2=c2, lam=lam, gamma=gamma)
    if base.algo == "vr-adagda":
        extra = 2.0 / (3.0 * k**3)
        c1 = extra + 9.0 * c.mu**2 / 4.0
        c2 = extra + 75.0 * c.l_f**2 / 2.0
        m = max(k**3, (c1 * k) ** 3, (c2 * k) ** 3)
        lam = min(_lambda_bounds_vr(c, base.q))
        gamma = min(_gamma_bounds_vr(c, lam, m, k, base.q))
        return base.with_(schedule=Schedule("poly-third", k, m), c1=c1, c2=c2, lam=lam, gamma=gamma)
    raise ConfigError("suggestions exist only for adagda and vr-adagda")


def lyapunov_constant(config: SolverConfig, constants: ProblemConstants, *, f_gap: float,
                      delta1_sq: float, sigma: float, b1: float, T: int,
                      unconstrained: bool = False) -> float:
    """Constant in front of the rate bound (G/G' for adagda, M/M' for vr-adagda)."""
    c = constants
    k, m, q = config.schedule.k, config.schedule.m, config.q
    lam, gamma, rho = config.lam, config.gamma, c.rho
    if config.algo == "adagda":
        if unconstrained:
            return (rho * f_gap / (k * gamma) + 9 * b1 * c.l_f**2 * delta1_sq / (k * lam * c.mu)
                    + 2 * sigma**2 / (q * k * c.mu**2) + 2 * m * sigma**2 / (q * k * c.mu**2) * math.log(m + T))
        return (f_gap / (k * gamma * rho) + 9 * b1 * c.l_f**2 * delta1_sq / (k * lam * c.mu * rho**2)
                + 2 * sigma**2 / (q * k * c.mu**2 * rho**2)
                + 2 * m * sigma**2 / (q * k * c.mu**2 * rho**2) * math.log(m + T))
    if config.algo == "vr-adagda":
        scale = 1.0 if unconstrained else 1.0 / rho**2
        first = (rho if unconstrained else 1.0 / rho) * f_gap / (T * gamma * k)
        return (first + 9 * c.l_f**2 * b1 * delta1_sq / (k * lam * c.mu) * scale
                + 2 * sigma**2 * m ** (1 / 3) / (k**2 * q * c.mu**2) * scale
                + 2 * k**2 * (config.c1**2 + config.c2**2) * sigma**2 / (q * c.mu**2) * scale * math.log(m + T))
    raise ConfigError("no rate constant for sgda")


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryRecord:
    """Logged diagnostics of one run; missing values are NaN."""

    algo: str
    seed: int
    columns: dict[str, np.ndarray]
    running_avg: np.ndarray
    wall_time: float = 0.0

    def __len__(self) -> int:
        return len(self.columns["t"])

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def rows(self):
        for i in range(len(self)):
            yield [self.columns[c][i] for c in CSV_COLUMNS]

    @classmethod
    def empty(cls, algo: str, seed: int) -> TrajectoryRecord:
        return cls(algo, seed, {c: np.zeros(0) for c in CSV_COLUMNS}, np.zeros(0))


@dataclass
class RunResult:
    record: TrajectoryRecord
    x: np.ndarray  # selected output iterate
    y: np.ndarray
    zeta: int
    final_x: np.ndarray
    final_y: np.ndarray


def log_points(T: int, stride: int | None, per_decade: int) -> np.ndarray:
    """Iterations to log: a regular stride plus geometric checkpoints, always 1 and T."""
    if T <= 0:
        return np.zeros(0, dtype=np.int64)
    stride = stride or max(1, T // 1000)
    regular = np.arange(1, T + 1, stride)
    decades = math.log10(T) if T > 1 else 0.0
    geo = np.unique(np.round(10.0 ** np.linspace(0.0, decades, max(2, int(decades * per_decade) + 1))))
    pts = np.union1d(np.union1d(regular, geo.astype(np.int64)), [1, T])
    return pts[(pts >= 1) & (pts <= T)].astype(np.int64)


class _BatchFeed:
    """Prefetches per-lane mini-batches in chunks.

    Each lane's stream is read in exactly the order ``problem.sample`` would
    read it one batch at a time, so chunking never changes the draws.
    """

    def __init__(self, problem: StochasticMinimaxProblem, rngs: list[RngStream], q: int, chunk: int = 512):
        self.problem, self.rngs, self.q, self.chunk = problem, rngs, q, chunk
        self.buf = None
        self.pos = 0

    def _refill(self) -> None:
        p, q, n = self.problem, self.q, self.chunk
        w = p.draw_width
        raw = np.stack([rng.uniforms(n * q * w).reshape(n, q, w) for rng in self.rngs])
        if p.draw_kind == "normal":
            from scipy.special import ndtri

            raw = ndtri(raw)
        self.buf = p.decode(raw)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.buf is None or self.pos == self.chunk:
            self._refill()
        b = self.buf[:, self.pos]
        self.pos += 1
        return b


class _Recorder:
    def __init__(self, points: np.ndarray, lanes: int):
        self.points = set(int(t) for t in points)
        self.rows: list[dict[str, np.ndarray]] = []
        self.avg: list[np.ndarray] = []
        self.lanes = lanes

    def wants(self, t: int) -> bool:
        return t in self.points

    def add(self, values: dict, running_avg: np.ndarray) -> None:
        S = self.lanes
        self.rows.append({c: np.broadcast_to(np.asarray(values.get(c, np.nan), dtype=np.float64), (S,))
                          for c in CSV_COLUMNS})
        self.avg.append(np.broadcast_to(running_avg, (S,)).astype(np.float64))

    def records(self, algo: str, seeds, wall: float) -> list[TrajectoryRecord]:
        out = []
        for i, seed in enumerate(seeds):
            cols = {c: np.array([r[c][i] for r in self.rows], dtype=np.float64) for c in CSV_COLUMNS}
            avg = np.array([a[i] for a in self.avg], dtype=np.float64)
            out.append(TrajectoryRecord(algo, int(seed), cols, avg, wall))
        return out


def _lanes(v: np.ndarray, S: int) -> np.ndarray:
    return np.ascontiguousarray(np.broadcast_to(v, (S,) + v.shape[-1:]), dtype=np.float64)


def _guard(t: int, seeds, x, y, x_new, y_new) -> None:
    ok = np.abs(x_new).max() < DIVERGENCE_LIMIT and np.abs(y_new).max() < DIVERGENCE_LIMIT
    if not ok:
        bad = ~(np.all(np.abs(x_new) < DIVERGENCE_LIMIT, axis=-1) & np.all(np.abs(y_new) < DIVERGENCE_LIMIT, axis=-1))
        raise NumericalAbort(t, [s for s, b in zip(seeds, bad) if b], x, y,
                             "iterate diverged or became non-finite")


@dataclass
class _State:
    """Everything a step needs; ``x``, ``y`` and estimators carry a lane axis."""

    t: int
    x: np.ndarray
    y: np.ndarray
    est: object
    last_g: tuple
    oracle: int
    alpha: float = math.nan
    beta: float = math.nan
    metric_x: Metric | None = None
    metric_y: Metric | None = None


def _make_metrics(config: SolverConfig, ax: AdaptState, ay: AdaptState, st: _State) -> None:
    gx, gy = st.last_g
    st.metric_x = ax.update(gx, st.est.v, check=False)
    st.metric_y = ay.update(gy, st.est.w, check=False)


def _prox_move(problem, config: SolverConfig, st: _State, eta: float) -> tuple[np.ndarray, np.ndarray]:
    spec = problem.spec
    if config.gamma > 0:
        xt = generalized_project(spec.x_set, st.x, st.est.v, st.metric_x, config.gamma)
        x_new = (1.0 - eta) * st.x + eta * xt
    else:
        x_new = st.x
    if config.lam > 0:
        # ascent prox: maximizing <w, y> - D(y, y_t)/lam is minimizing <-w, y> + D(y, y_t)/lam
        yt = generalized_project(spec.y_set, st.y, -st.est.w, st.metric_y, config.lam)
        y_new = (1.0 - eta) * st.y + eta * yt
    else:
        y_new = st.y
    return x_new, y_new


def step_adagda(problem, config: SolverConfig, st: _State, feed: _BatchFeed, eta: float) -> _State:
    """Lines 5-9 of the momentum method; metrics for this step must already be in ``st``."""
    x_new, y_new = _prox_move(problem, config, st, eta)
    batch = feed.next()
    g_new = problem.batch_grads(x_new, y_new, batch)
    alpha, beta = config.coefficients(eta)
    est = momentum_update(st.est, g_new, alpha, beta)
    return _State(st.t + 1, x_new, y_new, est, g_new, st.oracle + 2 * config.q, alpha, beta)


def step_vr_adagda(problem, config: SolverConfig, st: _State, feed: _BatchFeed, eta: float) -> _State:
    """Variance-reduced counterpart: the new batch is also evaluated at the old iterate."""
    x_new, y_new = _prox_move(problem, config, st, eta)
    batch = feed.next()
    g_new = problem.batch_grads(x_new, y_new, batch)
    g_old = problem.batch_grads(st.x, st.y, batch)
    alpha, beta = config.coefficients(eta)
    est = storm_update(st.est, g_new, g_old, alpha, beta, x_new, y_new)
    return _State(st.t + 1, x_new, y_new, est, g_new, st.oracle + 4 * config.q, alpha, beta)


def _step_sgda(problem, config: SolverConfig, st: _State, feed: _BatchFeed, eta: float) -> _State:
    spec = problem.spec
    gx, gy = st.last_g
    x_new = project(spec.x_set, st.x - (config.gamma * eta) * gx) if config.gamma > 0 else st.x
    y_new = project(spec.y_set, st.y + (config.lam * eta) * gy) if config.lam > 0 else st.y
    g_new = problem.batch_grads(x_new, y_new, feed.next())
    return _State(st.t + 1, x_new, y_new, None, g_new, st.oracle + 2 * config.q)


def _diagnostics(problem, config: SolverConfig, st: _State, eta: float, full: bool) -> tuple[dict, np.ndarray | None]:
    """Row values at iterate t, and the per-lane gradient-mapping norm (or None)."""
    spec = problem.spec
    metric = st.metric_x if st.metric_x is not None else Metric.identity()
    gmap = None
    row: dict = {}
    if problem.has_closed_form:
        gF = problem.primal_grad(st.x)
        if config.gamma > 0:
            gmap = norm(gradient_mapping(spec.x_set, st.x, gF, metric, config.gamma))
        if full:
            row["grad_F_norm"] = norm(gF)
            row["y_gap"] = norm(st.y - problem.y_star(st.x))
    if not full:
        return row, gmap
    row.update(t=st.t, eta=eta, alpha=st.alpha, beta=st.beta, oracle_calls=st.oracle)
    if gmap is not None:
        row["grad_map_norm"] = gmap
    if st.est is not None:
        row["v_err"], row["w_err"] = estimator_error(problem, st.est, st.x, st.y)
    else:
        ex = problem.grad_x_exact(st.x, st.y) - st.last_g[0]
        ey = problem.grad_y_exact(st.x, st.y) - st.last_g[1]
        row["v_err"], row["w_err"] = sqnorm(ex), sqnorm(ey)
    row["a_min"], row["a_max"] = metric.lambda_min(), metric.lambda_max()
    my = st.metric_y if st.metric_y is not None else Metric.identity()
    if my.kind != "diagonal":
        row["b_t"] = my.lambda_min()
    return row, gmap


def run_lanes(problem: StochasticMinimaxProblem, config: SolverConfig, seeds,
              *, progress=None) -> list[RunResult]:
    """Run one trajectory per seed, vectorized across seeds."""
    config.check()
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ContractError("need at least one seed")
    S, T = len(seeds), config.T
    spec = problem.spec
    x0, y0 = problem.initial_point()
    x = project(spec.x_set, _lanes(x0, S))
    y = project(spec.y_set, _lanes(y0, S))
    if T == 0:
        return [RunResult(TrajectoryRecord.empty(config.algo, s), x[i], y[i], 0, x[i], y[i])
                for i, s in enumerate(seeds)]

    start = time.perf_counter()
    feed = _BatchFeed(problem, [RngStream(s, SAMPLE_STREAM) for s in seeds], config.q)
    if config.output_rule == "uniform":
        zeta = np.array([1 + min(T - 1, int(RngStream(s, OUTPUT_STREAM).uniforms(1)[0] * T)) for s in seeds])
    else:
        zeta = np.full(S, T)
    out_x, out_y = x.copy(), y.copy()

    g = problem.batch_grads(x, y, feed.next())
    kind = VARIANCE_REDUCED if config.algo == "vr-adagda" else MOMENTUM
    est = init_estimator(kind, g, x, y) if config.algo != "sgda" else None
    st = _State(1, x, y, est, g, 2 * config.q)

    adaptive = config.algo != "sgda"
    ax, ay = AdaptState(config.adapt_x), AdaptState(config.adapt_y)
    step = {"adagda": step_adagda, "vr-adagda": step_vr_adagda, "sgda": _step_sgda}[config.algo]
    recorder = _Recorder(log_points(T, config.log_stride, config.checkpoints_per_decade), S)
    track = config.track_average and problem.has_closed_form and config.gamma > 0
    gsum = np.zeros(S)
    zeta_set = set(int(z) for z in zeta)

    for t in range(1, T + 1):
        if adaptive:
            _make_metrics(config, ax, ay, st)
        eta = config.schedule(t)
        full = recorder.wants(t)
        if track or full:
            row, gmap = _diagnostics(problem, config, st, eta, full)
            if gmap is not None and track:
                gsum = gsum + gmap
            if full:
                recorder.add(row, gsum / t if track else np.nan)
        if t in zeta_set:
            hit = zeta == t
            out_x[hit], out_y[hit] = st.x[hit], st.y[hit]
        if t == T:
            break
        new = step(problem, config, st, feed, eta)
        _guard(t + 1, seeds, st.x, st.y, new.x, new.y)
        st = new
        if progress is not None:
            progress(t)

    wall = time.perf_counter() - start
    records = recorder.records(config.algo, seeds, wall)
    return [RunResult(records[i], out_x[i].copy(), out_y[i].copy(), int(zeta[i]), st.x[i].copy(), st.y[i].copy())
            for i in range(S)]


def run(problem: StochasticMinimaxProblem, config: SolverConfig, seed: int) -> RunResult:
    return run_lanes(problem, config, [seed])[0]


# ---------------------------------------------------------------------------
# rate fitting


def running_average_curve(records: list[TrajectoryRecord], x_axis: str = "t") -> tuple[np.ndarray, np.ndarray]:
    """Seed-averaged running-average gradient-mapping norm at the shared logged points."""
    if not records:
        raise ContractError("no records")
    xs = records[0].columns[x_axis]
    for r in records[1:]:
        if not np.array_equal(r.columns[x_axis], xs):
            raise ContractError("records were logged at different points")
    vals = np.mean(np.stack([r.running_avg for r in records]), axis=0)
    return xs.copy(), vals


def fit_rate_slope(t_values, metric_values) -> float:
    """Least-squares slope of log(metric) against log(t)."""
    t = np.asarray(t_values, dtype=np.float64)
    v = np.asarray(metric_values, dtype=np.float64)
    if t.shape != v.shape or t.ndim != 1:
        raise ContractError("need two equal-length 1-D sequences")
    if t.size < 4:
        raise ContractError(f"need at least 4 points to fit a slope, got {t.size}")
    if np.any(t <= 0) or np.any(v <= 0):
        raise ContractError("log-log fit needs positive values")
    lt, lv = np.log(t), np.log(v)
    lt0 = lt - lt.mean()
    return float(np.dot(lt0, lv - lv.mean()) / np.dot(lt0, lt0))
