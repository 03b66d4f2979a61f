from .config import ConfigError, ScenarioConfig, load_config, parse_config, serialize
from .plots import emit_plots
from .runner import RunArtifacts, run_regret, run_scenario

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "RunArtifacts",
    "load_config",
    "parse_config",
    "serialize",
    "run_scenario",
    "run_regret",
    "emit_plots",
]
