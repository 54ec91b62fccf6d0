"""Command-line interface.

    minimax-gda run       --config exp.toml --out results/ --seeds 5
    minimax-gda validate  --config exp.toml [--strict]
    minimax-gda compare   --config exp.toml --algos adagda,vr-adagda --budget-mode oracle
    minimax-gda suggest-config --mu 1 --l-f 1 --b 1 --b-hat 1 --rho 1
    minimax-gda presets

Exit codes: 0 success, 1 configuration error, 2 numerical abort or I/O error.
``MINIMAX_GDA_LOG`` sets the log level (debug, info, warning, error).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from ..core import ContractError, UnsupportedCapability
from ..solvers import (
    ALGOS,
    ConfigError,
    NumericalAbort,
    ProblemConstants,
    RunResult,
    SolverConfig,
    fit_rate_slope,
    iterations_for_budget,
    oracle_calls,
    run_lanes,
    suggest_config,
    validate_config,
)
from .config import (
    ExperimentConfig,
    build_problem,
    dumps_config,
    load_config,
    load_preset,
    loads_config,
    parse_seeds,
    preset_names,
)
from .output import emit_csv, emit_running_average, summarize, trajectory_filename, write_gnuplot, write_summary

log = logging.getLogger("minimax_gda")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _setup_logging() -> None:
    level = getattr(logging, os.environ.get("MINIMAX_GDA_LOG", "warning").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _chunk_worker(config_text: str, seeds: list[int]) -> list[RunResult]:
    cfg = loads_config(config_text)
    return run_lanes(build_problem(cfg.problem), cfg.solver, seeds)


def execute(cfg: ExperimentConfig, seeds=None, jobs: int | None = None) -> list[RunResult]:
    """Run every seed; with jobs > 1 seeds are split across worker processes.

    Each seed's trajectory is independent of how seeds are grouped, so the
    serial and parallel paths give identical results.
    """
    seeds = list(cfg.sweep.seeds if seeds is None else seeds)
    jobs = cfg.sweep.jobs if jobs is None else jobs
    jobs = max(1, min(jobs, len(seeds)))
    if jobs == 1:
        return run_lanes(build_problem(cfg.problem), cfg.solver, seeds)
    chunks = [list(c) for c in np.array_split(np.array(seeds), jobs)]
    text = dumps_config(cfg)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_chunk_worker, [text] * len(chunks), [[int(s) for s in c] for c in chunks]))
    return [r for part in parts for r in part]


def write_results(out: Path, cfg: ExperimentConfig, results_by_algo: dict[str, list[RunResult]]) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dumps_config(cfg))
    summaries = {}
    for algo, results in results_by_algo.items():
        for res in results:
            name = trajectory_filename(algo, res.record.seed)
            emit_csv(res.record, out / name)
            emit_running_average(res.record, out / name.replace(".csv", ".avg.csv"))
        summaries[algo] = summarize([r.record for r in results])
    write_summary(summaries, out / "summary.csv")
    write_gnuplot(summaries, out / "summary.dat")
    return summaries


def slope_report(summaries: dict) -> dict[str, float]:
    slopes = {}
    for algo, s in summaries.items():
        x, y = s["oracle_calls"], s["running_avg_mean"]
        ok = np.isfinite(y) & (y > 0) & (x > 0)
        if ok.sum() >= 4 and x[ok].max() >= 100 * x[ok].min():
            slopes[algo] = fit_rate_slope(x[ok], y[ok])
    return slopes


def _load(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("one of --config PATH or --preset NAME is required")
    if getattr(args, "seeds", None):
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, seeds=parse_seeds(args.seeds)))
    if getattr(args, "jobs", None):
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, jobs=args.jobs))
    if getattr(args, "stride", None):
        if args.stride < 1:
            raise ConfigError("--stride must be positive")
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, stride=args.stride))
        cfg = cfg.with_solver(log_stride=args.stride)
    return cfg


def _report(cfg: ExperimentConfig, solver: SolverConfig, nu=None):
    problem = build_problem(cfg.problem)
    if solver.algo == "sgda":
        return None
    return validate_config(solver, ProblemConstants.from_problem(problem, solver), nu=nu)


def _advise(cfg: ExperimentConfig, solver: SolverConfig, strict: bool) -> None:
    report = _report(cfg, solver)
    if report is None or report.passed:
        return
    names = ", ".join(c.name for c in report.violations)
    if strict:
        raise ConfigError(f"{solver.algo}: theorem conditions violated: {names}")
    log.warning("%s: outside theorem conditions (%s); running anyway", solver.algo, names)


def cmd_run(args) -> int:
    cfg = _load(args)
    _advise(cfg, cfg.solver, args.strict)
    out = Path(args.out or cfg.output.directory)
    results = execute(cfg)
    summaries = write_results(out, cfg, {cfg.solver.algo: results})
    for algo, slope in slope_report(summaries).items():
        print(f"{algo}: running-average slope vs oracle calls {slope:.4f}")
    print(f"wrote {len(results)} trajectories to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    report = _report(cfg, cfg.solver, nu=args.nu)
    if report is None:
        print("sgda: no theorem conditions to check")
        return EXIT_OK
    print(report.format())
    if args.strict and not report.passed:
        return EXIT_CONFIG
    return EXIT_OK


def _solver_for(cfg: ExperimentConfig, algo: str, T: int, suggest: bool) -> SolverConfig:
    solver = cfg.solver.with_(algo=algo, T=T)
    if suggest and algo != "sgda":
        problem = build_problem(cfg.problem)
        solver = suggest_config(solver, ProblemConstants.from_problem(problem, solver), k=solver.schedule.k)
    return solver


def cmd_compare(args) -> int:
    cfg = _load(args)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGOS]
    if bad or not algos:
        raise ConfigError(f"--algos must list algorithms from {ALGOS}")
    q, T = cfg.solver.q, cfg.solver.T
    budget = oracle_calls(cfg.solver.algo, q, T)
    results, configs = {}, {}
    for algo in algos:
        T_a = iterations_for_budget(algo, q, budget) if args.budget_mode == "oracle" else T
        solver = _solver_for(cfg, algo, T_a, args.suggest)
        try:
            solver.check()
        except ContractError as exc:
            raise ConfigError(f"{algo}: {exc}") from exc
        _advise(cfg, solver, args.strict)
        run_cfg = dataclasses.replace(cfg, solver=solver)
        configs[algo] = run_cfg
        results[algo] = execute(run_cfg)
        log.info("%s: T=%d, %d oracle calls", algo, T_a, oracle_calls(algo, q, T_a))
    out = Path(args.out or cfg.output.directory)
    summaries = write_results(out, cfg, results)
    for algo, run_cfg in configs.items():
        (out / f"config_{algo}.toml").write_text(dumps_config(run_cfg))
    slopes = slope_report(summaries)
    for algo in algos:
        s = summaries[algo]
        line = f"{algo}: T={int(s['t'][-1])} oracle_calls={int(s['oracle_calls'][-1])}"
        if np.isfinite(s["running_avg_mean"][-1]):
            line += f" final running-average {s['running_avg_mean'][-1]:.6g}"
        if algo in slopes:
            line += f" slope {slopes[algo]:.4f}"
        print(line)
    return EXIT_OK


def cmd_suggest(args) -> int:
    explicit = [args.mu, args.l_f, args.b, args.b_hat, args.rho]
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise ConfigError("give all of --mu --l-f --b --b-hat --rho, or none (then a config is used)")
        constants = ProblemConstants(*explicit)
        base = SolverConfig(algo=args.algo, q=args.q)
        solver = suggest_config(base, constants, k=args.k)
        report = validate_config(solver, constants, y_metric_scalar=True)
        s = solver
        doc = {"solver": {"algo": s.algo, "gamma": s.gamma, "lam": s.lam, "schedule": s.schedule.kind,
                          "k": s.schedule.k, "m": s.schedule.m, "c1": s.c1, "c2": s.c2, "q": s.q}}
        text = tomli_w.dumps(doc)
    else:
        cfg = _load(args)
        solver = cfg.solver.with_(algo=args.algo, q=args.q)
        problem = build_problem(cfg.problem)
        constants = ProblemConstants.from_problem(problem, solver)
        solver = suggest_config(solver, constants, k=args.k)
        report = validate_config(solver, constants)
        text = dumps_config(dataclasses.replace(cfg, solver=solver))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print("# " + report.format().replace("\n", "\n# "), file=sys.stderr)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minimax-gda", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--config", metavar="PATH", help="experiment TOML file")
        p.add_argument("--preset", metavar="NAME", help="bundled experiment (see `presets`)")

    def sweep(p):
        p.add_argument("--out", metavar="DIR", help="output directory (default: output.directory)")
        p.add_argument("--seeds", metavar="N|LIST", help="seed count or comma-separated seeds")
        p.add_argument("--jobs", type=int, metavar="N", help="worker processes")
        p.add_argument("--stride", type=int, metavar="K", help="log every K iterations")
        p.add_argument("--strict", action="store_true", help="treat theorem-condition violations as errors")

    p = sub.add_parser("run", help="run one algorithm over a seed sweep")
    source(p)
    sweep(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check the theorem step-size conditions")
    source(p)
    p.add_argument("--strict", action="store_true", help="exit 1 when a condition fails")
    p.add_argument("--nu", type=float, help="also check the large-batch regime q = kappa^nu")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="run several algorithms on one problem")
    source(p)
    sweep(p)
    p.add_argument("--algos", default="adagda,vr-adagda", help="comma-separated algorithms")
    p.add_argument("--budget-mode", choices=("iter", "oracle"), default="oracle",
                   help="match iteration counts or oracle-call budgets")
    p.add_argument("--suggest", action="store_true", help="theorem-suggested parameters per algorithm")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("suggest-config", help="emit a theorem-compliant solver config")
    source(p)
    p.add_argument("--algo", choices=("adagda", "vr-adagda"), default="adagda")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--q", type=int, default=1)
    for flag in ("--mu", "--l-f", "--b", "--b-hat", "--rho"):
        p.add_argument(flag, type=float)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("presets", help="list bundled experiment presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ContractError, UnsupportedCapability) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
