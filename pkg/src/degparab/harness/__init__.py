"""Experiment harness: configuration, studies, output and the CLI."""

from ..records import RunRecord
from .config import ConfigError, ExperimentConfig, default_config, emit_config, load_config, parse_config
from .studies import (StudyFailure, StudyResult, run_front_tracking, run_iteration_study,
                      run_porous_convergence, run_study, run_sulfation_2d, run_sulfation_profile)
from .output import write_result
from .cli import main as cli_main

__all__ = ["RunRecord", "ConfigError", "ExperimentConfig", "default_config", "emit_config",
           "load_config", "parse_config", "StudyFailure", "StudyResult", "run_front_tracking",
           "run_iteration_study", "run_porous_convergence", "run_study", "run_sulfation_2d",
           "run_sulfation_profile", "write_result", "cli_main"]
