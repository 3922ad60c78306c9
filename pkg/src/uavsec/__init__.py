"""Link-level simulator for UAV-assisted attack prevention, detection and
recovery in cellular radio access networks."""

from .config import ScenarioConfig, load_scenario
from .engine import emit, run, sweep

__all__ = ["ScenarioConfig", "load_scenario", "run", "emit", "sweep"]
__version__ = "0.1.0"
