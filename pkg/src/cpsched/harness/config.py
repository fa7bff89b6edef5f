"""Experiment configuration: nested dataclasses loadable from YAML."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import ChannelParams
from ..detmodel import DetectionModel
from ..scheduler import SchedulerParams
from ..sensing import LidarConfig
from ..world import InterestRegion, MapGeometry, MobilityConfig

MODES = ("edge", "distributed")
ALGORITHMS = ("cmass", "first-order", "cmass-noexplore", "closest", "area", "cpm", "optimal")
DEFAULT_BANDWIDTH = {"edge": 8e6, "distributed": 4e6}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "edge"
    frames: int = 1000
    seed: int = 0
    dt: float = 0.1
    bandwidth: object = None  # Hz; float, per-frame list (cycled), or None for the mode default
    algorithms: tuple = ALGORITHMS
    out: str | None = None
    optimal_cap: int = 18
    area_cell: float = 5.0
    dump_topology: bool = False
    map: MapGeometry = field(default_factory=MapGeometry)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    detection: DetectionModel = field(default_factory=DetectionModel)
    channel: ChannelParams = field(default_factory=ChannelParams)
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    interest: InterestRegion | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.frames) < 1:
            raise ConfigError("frames must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithms")
        if self.bandwidth is None:
            object.__setattr__(self, "bandwidth", DEFAULT_BANDWIDTH[self.mode])
        bw = self.bandwidth if isinstance(self.bandwidth, (list, tuple)) else [self.bandwidth]
        if not bw or any(not float(b) >= 0 for b in bw):
            raise ConfigError("bandwidth must be >= 0")
        if isinstance(self.bandwidth, list):
            object.__setattr__(self, "bandwidth", tuple(float(b) for b in self.bandwidth))
        if self.interest is None:
            region = InterestRegion("edge-circle", anchor=tuple(float(v) for v in self.map.center)) if self.mode == "edge" else InterestRegion("distributed-rect")
            object.__setattr__(self, "interest", region)
        elif self.interest.mode == "edge-circle" and self.interest.anchor is None:
            object.__setattr__(self, "interest", dataclasses.replace(self.interest, anchor=tuple(float(v) for v in self.map.center)))
        if (self.mode == "edge") != (self.interest.mode == "edge-circle"):
            raise ConfigError(f"interest region {self.interest.mode!r} does not match mode {self.mode!r}")

    def budget(self, t):
        if isinstance(self.bandwidth, tuple):
            return float(self.bandwidth[t % len(self.bandwidth)])
        return float(self.bandwidth)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


_SECTIONS = {
    "map": MapGeometry,
    "mobility": MobilityConfig,
    "lidar": LidarConfig,
    "detection": DetectionModel,
    "channel": ChannelParams,
    "scheduler": SchedulerParams,
    "interest": InterestRegion,
}


def _section(cls, data, name):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kw[name] = _section(cls, data.pop(name), name)
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS)
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kw.update(data)
    if "algorithms" in kw and isinstance(kw["algorithms"], str):
        kw["algorithms"] = [kw["algorithms"]]
    try:
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment config."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
