"""Config-driven experiment harness: parsing, runs, sweeps, files and plots."""
from .config import ConfigError, ExperimentConfig, config_from_dict, parse_config
from .io import TRACE_HEADER, read_trace_csv, write_trace_csv
from .plotting import PLOT_KINDS, emit_plot_script, render_svg
from .runner import RunResult, build_problem, run_experiment, sweep

__all__ = [
    "ConfigError", "ExperimentConfig", "config_from_dict", "parse_config",
    "TRACE_HEADER", "read_trace_csv", "write_trace_csv",
    "PLOT_KINDS", "emit_plot_script", "render_svg",
    "RunResult", "build_problem", "run_experiment", "sweep",
]
