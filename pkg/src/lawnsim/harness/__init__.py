from .config import ConfigError, ScenarioConfig, load_config, loads_config, parse_config
from .experiments import (RunArtifacts, load_artifacts, report_summary, run_capacity_sweep,
                          run_control_experiment, run_corridor_demo)

__all__ = [
    "ConfigError", "ScenarioConfig", "load_config", "loads_config", "parse_config",
    "RunArtifacts", "load_artifacts", "report_summary",
    "run_capacity_sweep", "run_control_experiment", "run_corridor_demo",
]
