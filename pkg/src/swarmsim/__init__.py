"""Flow-level BitTorrent swarm simulator with incentivized reward seeding."""

__version__ = "0.1.0"

from .scenario import ScenarioConfig, ConfigError
from .simulation import run_scenario

__all__ = ["ScenarioConfig", "ConfigError", "run_scenario", "__version__"]
