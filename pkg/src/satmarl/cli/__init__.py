"""Experiment harness: configs, scenarios and the ``satmarl`` command."""

from .config import ExperimentConfig, dump_config, load_config, parse_config
from .main import main
from .scenarios import SCENARIOS, reduced, scenario_env

__all__ = [
    "ExperimentConfig",
    "SCENARIOS",
    "dump_config",
    "load_config",
    "main",
    "parse_config",
    "reduced",
    "scenario_env",
]
