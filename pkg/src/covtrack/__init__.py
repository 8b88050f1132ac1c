"""Heterogeneous multi-robot coverage control with grid-based target tracking.

The package simulates teams of unicycle robots that share a search area
through Voronoi-family partitions weighted by each sensor's unused
tracking capacity, estimate the target density with a distributed
grid-based intensity filter, and steer their detection centroids toward
the density mass in their regions.
"""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, config_from_dict, load_config
from .engine import RunResult, Simulation, run_scenario
from .metrics import OspaParams, estimate_targets, moving_average, ospa
from .partition import (PartitionAssignment, ccvd_partition, ccvd_swap,
                        power_partition, voronoi_partition)
from .phd import DistributedPhd, PhdGrid, PhdModels
from .sensors import (SensorCatalog, SensorSpec, available_catalogs,
                      load_catalog)
from .world import GridWorld, RobotState

__all__ = [
    "__version__",
    "ConfigError",
    "ScenarioConfig",
    "config_from_dict",
    "load_config",
    "RunResult",
    "Simulation",
    "run_scenario",
    "OspaParams",
    "estimate_targets",
    "moving_average",
    "ospa",
    "PartitionAssignment",
    "ccvd_partition",
    "ccvd_swap",
    "power_partition",
    "voronoi_partition",
    "DistributedPhd",
    "PhdGrid",
    "PhdModels",
    "SensorCatalog",
    "SensorSpec",
    "available_catalogs",
    "load_catalog",
    "GridWorld",
    "RobotState",
]
