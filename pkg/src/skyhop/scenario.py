"""Scenario configuration: what to run, where, and with which knobs.

A scenario is fully determined by its config — the seed fixes depot and
package placement, transit-edge capacities, and every downstream
tie-break — so any stage can be re-derived from the config alone.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geo import BoundingBox, GeoPoint
from .network import DroneSpec

SURROGATE_MODES = ("preprocessed", "direct_flight")
STRATEGIES = ("replan1", "replanm")


@dataclass
class ScenarioConfig:
    gtfs_dir: str
    bbox: BoundingBox
    window: tuple[float, float]      # seconds since midnight, closed
    num_depots: int
    num_packages: int
    num_agents: int
    seed: int = 0
    drone: DroneSpec = field(default_factory=lambda: DroneSpec(25.0, 7.0))
    capacity_choices: tuple[int, ...] = (3, 4, 5)
    w: float = 1.1
    surrogate: str = "preprocessed"
    strategy: str = "replan1"
    timeout_s: float = 180.0
    sites: int = 100                 # surrogate sampling resolution

    def validate(self) -> "ScenarioConfig":
        if min(self.num_depots, self.num_packages, self.num_agents) < 0:
            raise ConfigError("counts must be non-negative")
        if self.w < 1.0:
            raise ConfigError(f"suboptimality factor {self.w} is below 1")
        if self.surrogate not in SURROGATE_MODES:
            raise ConfigError(f"surrogate must be one of {SURROGATE_MODES}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.window[1] <= self.window[0]:
            raise ConfigError(f"empty time window {self.window}")
        if not self.capacity_choices or min(self.capacity_choices) < 1:
            raise ConfigError("capacities must be positive integers")
        if self.sites < 1:
            raise ConfigError("need at least one surrogate site")
        if self.timeout_s is not None and self.timeout_s <= 0:
            raise ConfigError("timeout must be positive (or null)")
        return self

    def to_dict(self) -> dict:
        return {
            "gtfs_dir": self.gtfs_dir,
            "bbox": [self.bbox.lo.lat, self.bbox.lo.lon, self.bbox.hi.lat, self.bbox.hi.lon],
            "window": list(self.window),
            "depots": self.num_depots,
            "packages": self.num_packages,
            "agents": self.num_agents,
            "seed": self.seed,
            "drone": {"speed_kmh": self.drone.speed_kmh, "max_flight_km": self.drone.max_flight_km},
            "capacities": list(self.capacity_choices),
            "w": self.w,
            "surrogate": self.surrogate,
            "strategy": self.strategy,
            "timeout_s": self.timeout_s,
            "sites": self.sites,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        try:
            bbox = BoundingBox(
                GeoPoint(float(raw["bbox"][0]), float(raw["bbox"][1])),
                GeoPoint(float(raw["bbox"][2]), float(raw["bbox"][3])),
            )
            drone_raw = raw.get("drone", {})
            drone = DroneSpec(
                float(drone_raw.get("speed_kmh", 25.0)),
                float(drone_raw.get("max_flight_km", 7.0)),
            )
            timeout = raw.get("timeout_s", 180.0)
            cfg = cls(
                gtfs_dir=str(raw["gtfs_dir"]),
                bbox=bbox,
                window=(float(raw["window"][0]), float(raw["window"][1])),
                num_depots=int(raw["depots"]),
                num_packages=int(raw["packages"]),
                num_agents=int(raw["agents"]),
                seed=int(raw.get("seed", 0)),
                drone=drone,
                capacity_choices=tuple(int(c) for c in raw.get("capacities", (3, 4, 5))),
                w=float(raw.get("w", 1.1)),
                surrogate=str(raw.get("surrogate", "preprocessed")),
                strategy=str(raw.get("strategy", "replan1")),
                timeout_s=None if timeout is None else float(timeout),
                sites=int(raw.get("sites", 100)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc
        return cfg.validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)


@dataclass
class Scenario:
    """Concrete depot and package locations for one run."""

    depots: list[GeoPoint]
    packages: list[GeoPoint]


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Seeded uniform placement of depots and packages in the box."""
    rng = random.Random(config.seed)

    def draw() -> GeoPoint:
        y = rng.random()
        x = rng.random()
        return config.bbox.scale(x, y)

    depots = [draw() for _ in range(config.num_depots)]
    packages = [draw() for _ in range(config.num_packages)]
    return Scenario(depots, packages)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    payload = {
        "depots": [[p.lat, p.lon] for p in scenario.depots],
        "packages": [[p.lat, p.lon] for p in scenario.packages],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return Scenario(
            [GeoPoint(float(a), float(b)) for a, b in raw["depots"]],
            [GeoPoint(float(a), float(b)) for a, b in raw["packages"]],
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load scenario {path}: {exc}") from exc
