"""Monte Carlo harness, result export, figures and the applied matching mode."""
from .config import ScenarioConfig, load_config, load_scenario
from .simulate import ReplicateRecord, ScenarioSummary, run_replicate, run_scenario

__all__ = [
    "ReplicateRecord",
    "ScenarioConfig",
    "ScenarioSummary",
    "load_config",
    "load_scenario",
    "run_replicate",
    "run_scenario",
]
