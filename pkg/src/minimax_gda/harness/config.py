"""Experiment configuration files.

An experiment file is TOML with a pinned ``format_version`` and six
sections. Every key has an explicit type; unknown keys are rejected.
See ``docs/config.md`` for the full grammar.

    format_version = "minimax-gda/1"

    [problem]     family = "quadratic" | "robust" | "policy-eval", plus family keys
    [solver]      algo, gamma, lam, schedule, k, m, eta, c1, c2, q, T, output_rule, suggest
    [adapt_x]     rule, varrho, rho, b0, b_floor, b_cap, a_cap, scale
    [adapt_y]     same keys as adapt_x
    [sweep]       seeds (list) or count, jobs
    [output]      directory, stride, checkpoints_per_decade, track_average

``solver.suggest = true`` replaces c1, c2, m, lam and gamma with the
theorem-suggested values for the resolved problem at load time; the
resolved file written next to results has ``suggest = false`` and the
explicit numbers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from ..adapt import AdaptRule, AdaptSpec
from ..core import ContractError
from ..problems import PolicyEvalMSPBE, QuadraticMinimax, RobustWeightedLoss, StochasticMinimaxProblem
from ..solvers import ConfigError, ProblemConstants, Schedule, SolverConfig, suggest_config

__all__ = [
    "FORMAT_VERSION",
    "ProblemConfig",
    "SweepConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "loads_config",
    "dumps_config",
    "preset_names",
    "load_preset",
    "build_problem",
    "parse_seeds",
]

FORMAT_VERSION = "minimax-gda/1"

# family -> {key: (type, default)}
PROBLEM_KEYS: dict[str, dict[str, tuple[type, object]]] = {
    "quadratic": {
        "d1": (int, 10), "d2": (int, 10), "mu": (float, 1.0), "sigma": (float, 0.1),
        "p_eig_min": (float, 0.1), "p_eig_max": (float, 1.0),
        "q_sval_min": (float, 0.5), "q_sval_max": (float, 1.0), "x0_scale": (float, 1.0),
    },
    "robust": {
        "n_per_group": (int, 200), "reg": (float, 0.1), "csv": (str, ""), "intercept": (bool, True),
    },
    "policy-eval": {
        "n_states": (int, 5), "n_actions": (int, 2), "n_features": (int, 3),
        "discount": (float, 0.95), "reward_bound": (float, 1.0),
    },
}

SOLVER_KEYS = {
    "algo": str, "gamma": float, "lam": float, "schedule": str, "k": float, "m": float, "eta": float,
    "c1": float, "c2": float, "q": int, "T": int, "output_rule": str, "suggest": bool,
}
ADAPT_KEYS = {
    "rule": str, "varrho": float, "rho": float, "b0": float, "b_floor": float, "b_cap": float,
    "a_cap": float, "scale": float,
}
SWEEP_KEYS = {"seeds": list, "count": int, "jobs": int}
OUTPUT_KEYS = {"directory": str, "stride": int, "checkpoints_per_decade": int, "track_average": bool}
SECTIONS = ("problem", "solver", "adapt_x", "adapt_y", "sweep", "output")


@dataclass(frozen=True)
class ProblemConfig:
    family: str = "quadratic"
    data_seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in PROBLEM_KEYS:
            raise ConfigError(f"unknown problem family {self.family!r}; choose from {sorted(PROBLEM_KEYS)}")
        known = PROBLEM_KEYS[self.family]
        full = {k: d for k, (_, d) in known.items()}
        full.update(self.params)
        object.__setattr__(self, "params", full)


@dataclass(frozen=True)
class SweepConfig:
    seeds: tuple[int, ...] = (0,)
    jobs: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("sweep seeds must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    stride: int = 0  # 0 selects max(1, T // 1000)
    checkpoints_per_decade: int = 10
    track_average: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    solver: SolverConfig
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_solver(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, solver=self.solver.with_(**changes))


def _typed(section: str, key: str, value, kind: type):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"[{section}] {key}: expected integer, got boolean")
    if not isinstance(value, kind):
        raise ConfigError(f"[{section}] {key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _check_keys(section: str, table: dict, allowed) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"5"`` means seeds 0..4; ``"3,7,11"`` is an explicit list."""
    text = text.strip()
    try:
        if "," in text:
            return tuple(int(s) for s in text.split(",") if s.strip())
        n = int(text)
    except ValueError as exc:
        raise ConfigError(f"--seeds expects N or a comma-separated list, got {text!r}") from exc
    if n < 1:
        raise ConfigError("--seeds N needs N >= 1")
    return tuple(range(n))


def _adapt_from(section: str, table: dict, default: AdaptSpec) -> AdaptSpec:
    _check_keys(section, table, ADAPT_KEYS)
    vals = {k: _typed(section, k, v, ADAPT_KEYS[k]) for k, v in table.items()}
    try:
        if "rule" in vals:
            vals["rule"] = AdaptRule(vals["rule"])
        return default.with_(**vals)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _solver_from(table: dict, adapt_x: AdaptSpec, adapt_y: AdaptSpec) -> tuple[SolverConfig, bool]:
    _check_keys("solver", table, SOLVER_KEYS)
    v = {k: _typed("solver", k, val, SOLVER_KEYS[k]) for k, val in table.items()}
    base = SolverConfig()
    sched = Schedule(v.pop("schedule", "constant"), v.pop("k", 1.0), v.pop("m", 1.0), v.pop("eta", 0.9))
    suggest = v.pop("suggest", False)
    return dataclasses.replace(base, schedule=sched, adapt_x=adapt_x, adapt_y=adapt_y, **v), suggest


def build_problem(cfg: ProblemConfig) -> StochasticMinimaxProblem:
    p = cfg.params
    if cfg.family == "quadratic":
        return QuadraticMinimax.random(
            d1=p["d1"], d2=p["d2"], mu=p["mu"], sigma=p["sigma"],
            p_eigs=(p["p_eig_min"], p["p_eig_max"]), q_svals=(p["q_sval_min"], p["q_sval_max"]),
            data_seed=cfg.data_seed, x0_scale=p["x0_scale"])
    if cfg.family == "robust":
        if p["csv"]:
            return RobustWeightedLoss.from_csv(p["csv"], reg=p["reg"], intercept=p["intercept"])
        return RobustWeightedLoss.synthetic(n_per_group=p["n_per_group"], reg=p["reg"], data_seed=cfg.data_seed)
    return PolicyEvalMSPBE.random(
        n_states=p["n_states"], n_actions=p["n_actions"], n_features=p["n_features"],
        discount=p["discount"], reward_bound=p["reward_bound"], data_seed=cfg.data_seed)


def _resolve_suggestion(problem_cfg: ProblemConfig, solver: SolverConfig) -> SolverConfig:
    problem = build_problem(problem_cfg)
    constants = ProblemConstants.from_problem(problem, solver)
    return suggest_config(solver, constants, k=solver.schedule.k)


def loads_config(text: str) -> ExperimentConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    version = doc.pop("format_version", None)
    if version != FORMAT_VERSION:
        raise ConfigError(f"format_version must be {FORMAT_VERSION!r}, got {version!r}")
    _check_keys("top level", doc, SECTIONS)
    for name in SECTIONS:
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigError(f"[{name}] must be a table")

    prob = dict(doc.get("problem", {}))
    family = _typed("problem", "family", prob.pop("family", "quadratic"), str)
    data_seed = _typed("problem", "data_seed", prob.pop("data_seed", 0), int)
    if family not in PROBLEM_KEYS:
        raise ConfigError(f"unknown problem family {family!r}; choose from {sorted(PROBLEM_KEYS)}")
    _check_keys("problem", prob, PROBLEM_KEYS[family])
    params = {k: _typed("problem", k, v, PROBLEM_KEYS[family][k][0]) for k, v in prob.items()}
    problem_cfg = ProblemConfig(family, data_seed, params)

    ax = _adapt_from("adapt_x", doc.get("adapt_x", {}), AdaptSpec(AdaptRule.ADAM_DIAG))
    ay = _adapt_from("adapt_y", doc.get("adapt_y", {}), AdaptSpec(AdaptRule.ADAM_GLOBAL))
    solver, suggest = _solver_from(doc.get("solver", {}), ax, ay)
    if suggest:
        solver = _resolve_suggestion(problem_cfg, solver)

    sw = doc.get("sweep", {})
    _check_keys("sweep", sw, SWEEP_KEYS)
    if "seeds" in sw and "count" in sw:
        raise ConfigError("[sweep] give either seeds or count, not both")
    if "seeds" in sw:
        seeds = tuple(_typed("sweep", "seeds[]", s, int) for s in _typed("sweep", "seeds", sw["seeds"], list))
    else:
        count = _typed("sweep", "count", sw.get("count", 1), int)
        if count < 1:
            raise ConfigError("[sweep] count must be positive")
        seeds = tuple(range(count))
    sweep = SweepConfig(seeds, _typed("sweep", "jobs", sw.get("jobs", 1), int))

    out = doc.get("output", {})
    _check_keys("output", out, OUTPUT_KEYS)
    output = OutputConfig(**{k: _typed("output", k, v, OUTPUT_KEYS[k]) for k, v in out.items()})
    if output.stride < 0:
        raise ConfigError("[output] stride must be non-negative")

    solver = solver.with_(log_stride=output.stride or None,
                          checkpoints_per_decade=output.checkpoints_per_decade,
                          track_average=output.track_average)
    try:
        solver.check()
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(problem_cfg, solver, sweep, output)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


def _adapt_table(spec: AdaptSpec) -> dict:
    table = {"rule": spec.rule.value, "varrho": spec.varrho, "rho": spec.rho, "b0": spec.b0,
             "b_floor": spec.b_floor, "b_cap": spec.b_cap, "scale": spec.scale}
    if spec.a_cap is not None:
        table["a_cap"] = spec.a_cap
    return table


def to_document(cfg: ExperimentConfig) -> dict:
    s = cfg.solver
    return {
        "format_version": FORMAT_VERSION,
        "problem": {"family": cfg.problem.family, "data_seed": cfg.problem.data_seed, **cfg.problem.params},
        "solver": {
            "algo": s.algo, "gamma": s.gamma, "lam": s.lam, "schedule": s.schedule.kind,
            "k": s.schedule.k, "m": s.schedule.m, "eta": s.schedule.eta, "c1": s.c1, "c2": s.c2,
            "q": s.q, "T": s.T, "output_rule": s.output_rule, "suggest": False,
        },
        "adapt_x": _adapt_table(s.adapt_x),
        "adapt_y": _adapt_table(s.adapt_y),
        "sweep": {"seeds": list(cfg.sweep.seeds), "jobs": cfg.sweep.jobs},
        # the solver's logging settings are the ones a run uses
        "output": {**dataclasses.asdict(cfg.output), "stride": s.log_stride or 0,
                   "checkpoints_per_decade": s.checkpoints_per_decade, "track_average": s.track_average},
    }


def dumps_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; ``loads_config`` of it reproduces the solver exactly.

    The ``[output]`` logging keys are taken from the solver, so a config
    whose solver logging was changed in code survives the round trip.
    """
    return tomli_w.dumps(to_document(cfg))


def preset_names() -> list[str]:
    files = resources.files("minimax_gda").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> ExperimentConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return loads_config(resources.files("minimax_gda").joinpath("presets", f"{name}.toml").read_text())
