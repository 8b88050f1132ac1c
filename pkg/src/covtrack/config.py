"""Scenario configuration: dataclasses, YAML loading, overrides, presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .metrics import OspaParams
from .phd import PhdModels
from .sensors import SensorCatalog, load_catalog
from .targets import BoidsParams, RandomWalkParams


class ConfigError(ValueError):
    """Raised when a scenario description is malformed."""


METHODS = ("voronoi", "voronoi-cod", "power-cod", "ccvd-cod", "zigzag")

METHOD_ALIASES = {
    "v": "voronoi",
    "vc": "voronoi-cod",
    "pc": "power-cod",
    "cc": "ccvd-cod",
    "z": "zigzag",
}


def canonical_method(name: str) -> str:
    key = str(name).strip().lower()
    key = METHOD_ALIASES.get(key, key)
    if key not in METHODS:
        raise ConfigError(
            f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return key


@dataclass(frozen=True)
class WorldConfig:
    width: float = 100.0
    height: float = 100.0
    cells_x: int = 100
    cells_y: int = 100


@dataclass(frozen=True)
class RobotConfig:
    """Team composition and kinematic limits shared by all robots."""

    catalog: str = "longrange"
    team: str = ""
    roster: tuple[tuple[str, int], ...] = ()
    max_speed: float = 2.0
    max_turn: float = 2.0
    start: str = "random"           # "random" or "lower-edge"

    def expand(self, catalog: SensorCatalog) -> list[str]:
        """Return the per-robot sensor type list, roster order then id order."""
        if self.roster:
            pairs = self.roster
        elif self.team:
            team = catalog.teams.get(self.team)
            if team is None:
                raise ConfigError(
                    f"catalog {catalog.name!r} has no team {self.team!r}; "
                    f"available: {', '.join(sorted(catalog.teams))}")
            pairs = tuple(sorted(team.items()))
        else:
            raise ConfigError("robot section needs either 'team' or 'roster'")
        types = []
        for name, count in pairs:
            if name not in catalog.sensors:
                raise ConfigError(
                    f"catalog {catalog.name!r} has no sensor type {name!r}")
            if count < 1:
                raise ConfigError(f"roster count for {name!r} must be >= 1")
            types.extend([name] * int(count))
        return types


@dataclass(frozen=True)
class TargetConfig:
    mode: str = "random"            # "random" or "boids"
    count: int = 30
    max_speed: float = 1.0
    heading_jitter_deg: float = 30.0
    spawn_rate: float | None = None  # None: balance rate for constant count
    boids: BoidsParams = field(default_factory=BoidsParams)

    def __post_init__(self):
        if self.mode not in ("random", "boids"):
            raise ConfigError(f"unknown target mode {self.mode!r}")
        if self.count < 0:
            raise ConfigError("target count must be >= 0")
        if self.max_speed < 0:
            raise ConfigError("target max_speed must be >= 0")


@dataclass(frozen=True)
class ConsensusConfig:
    epsilon: float | None = None    # None: 1 / (max degree + 1)
    budget_factor: int = 10
    tol: float = 1e-6


@dataclass(frozen=True)
class OutputConfig:
    dump_phd: bool = False
    dump_partitions: bool = False
    partition_interval: int = 10


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    method: str = "ccvd-cod"
    dt: float = 1.0
    duration: float = 700.0
    steady_after: float = 300.0     # seconds before steady-state stats start
    ma_window: int = 5
    mu: float = 1.0
    comm_radius: float | None = None  # None: all robots are neighbours
    zigzag_spacing: float | None = None  # None: one cell
    world: WorldConfig = field(default_factory=WorldConfig)
    robots: RobotConfig = field(default_factory=RobotConfig)
    targets: TargetConfig = field(default_factory=TargetConfig)
    phd: PhdModels | None = None    # None: derived from targets and dt
    ospa: OspaParams = field(default_factory=OspaParams)
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if self.mu < 0:
            raise ConfigError("mu must be >= 0")
        if self.comm_radius is not None and self.comm_radius <= 0:
            raise ConfigError("comm_radius must be positive when given")
        if self.ma_window < 1:
            raise ConfigError("ma_window must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def phd_models(self) -> PhdModels:
        """Motion noise defaults to half the farthest single-step target move."""
        if self.phd is not None:
            return self.phd
        sd = self.targets.max_speed * self.dt / 2.0
        return PhdModels(motion_sd=sd)


_SECTIONS = {
    "world": WorldConfig,
    "robots": RobotConfig,
    "targets": TargetConfig,
    "phd": PhdModels,
    "ospa": OspaParams,
    "consensus": ConsensusConfig,
    "outputs": OutputConfig,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    kwargs = dict(data)
    if cls is RobotConfig and "roster" in kwargs:
        roster = kwargs["roster"]
        if isinstance(roster, dict):
            pairs = sorted(roster.items())
        else:
            pairs = [(str(k), int(v)) for k, v in roster]
        kwargs["roster"] = tuple((str(k), int(v)) for k, v in pairs)
    if cls is TargetConfig and "boids" in kwargs:
        kwargs["boids"] = _build(BoidsParams, kwargs["boids"], "targets.boids")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    data = dict(data)
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    top = {f.name for f in dataclasses.fields(ScenarioConfig)} - set(_SECTIONS)
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    kwargs.update(data)
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: ScenarioConfig) -> dict:
    """Plain-data mirror of the scenario, suitable for JSON or YAML echo."""
    out = dataclasses.asdict(config)
    out["robots"]["roster"] = [list(p) for p in config.robots.roster]
    if config.phd is None:
        out["phd"] = dataclasses.asdict(config.phd_models())
    return out


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value assignments; values parse as YAML scalars."""
    out = dict(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = yaml.safe_load(raw) if raw != "" else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}")
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
            child = dict(child)
            node[part] = child
            node = child
        node[parts[-1]] = value
    return out


def load_config(path: str | Path,
                overrides: list[str] | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def scenario_preset(name: str) -> dict:
    """Built-in scenario dictionaries; override keys as needed."""
    presets = {
        # 100 m arena, long range catalog, the quantitative setup
        "arena100": {
            "name": "arena100",
            "mu": 1.0,
            "dt": 1.0,
            "duration": 700.0,
            "world": {"width": 100.0, "height": 100.0,
                      "cells_x": 100, "cells_y": 100},
            "robots": {"catalog": "longrange", "team": "s4"},
            "targets": {"mode": "random", "count": 30, "max_speed": 1.0},
            # ghosts of departed targets linger at the default survival and
            # drag region centroids off live tracks; 0.9 keeps the goal on
            # whatever the sensor is actually following
            "phd": {"survival": 0.9},
        },
        # 10 m arena, short range catalog, flocking targets
        "lab10": {
            "name": "lab10",
            "mu": 0.004,
            "dt": 2.0,
            "duration": 600.0,
            "world": {"width": 10.0, "height": 10.0,
                      "cells_x": 50, "cells_y": 50},
            "robots": {"catalog": "tb3",
                       "roster": {"1": 2, "2": 2, "3": 2, "4": 2, "5": 2},
                       "max_speed": 0.2, "max_turn": 1.0},
            "targets": {"mode": "boids", "count": 8, "max_speed": 0.1},
        },
    }
    if name not in presets:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    return presets[name]


def resolve_catalog(config: ScenarioConfig) -> SensorCatalog:
    try:
        return load_catalog(config.robots.catalog)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
