"""Experiment configs, CSV output and the command-line interface."""

from .config import (
    FORMAT_VERSION,
    ExperimentConfig,
    OutputConfig,
    ProblemConfig,
    SweepConfig,
    build_problem,
    dumps_config,
    load_config,
    load_preset,
    loads_config,
    parse_seeds,
    preset_names,
)
from .output import emit_csv, read_csv, summarize, write_gnuplot, write_summary
