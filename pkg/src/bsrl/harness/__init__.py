"""Configuration, training runs, experiments, plots and the command line."""

from .config import RunConfig, apply_overrides, load_config, parse_config
from .stats import mean_se, milestone_report
from .train import TrainResult, build_env, evaluate, run_eval, train
