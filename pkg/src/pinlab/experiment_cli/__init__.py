from pinlab.experiment_cli.config import ConfigError, ExperimentConfig, parse_config, validate
from pinlab.experiment_cli.outputs import emit_outputs, load_result
from pinlab.experiment_cli.runner import ExperimentError, ExperimentResult, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentError", "ExperimentResult", "emit_outputs",
           "load_result", "parse_config", "run_experiment", "validate"]
