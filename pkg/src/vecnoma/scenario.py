"""Road geometry, vehicle kinematics and the scenario constants.

Coordinates: x points along the direction of travel, y from the base station
towards the lanes, z up the antenna mast. The base station sits at (0, 0, H)
and vehicles drive at z = 0.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from vecnoma.errors import ConfigError

# Guards floor() against representation error, e.g. 500 / (20 * 0.02).
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and reward constants of one simulated road segment.

    Defaults reproduce the reference experiment: 4 receive antennas, three
    lanes at 20/25/30 m/s, 500 m coverage, 20 ms slots, 1 MHz bandwidth,
    3 Mbps Poisson task arrivals.
    """

    num_antennas: int = 4
    num_lanes: int = 3
    lane_width: float = 5.0
    first_lane_offset: float = 5.0
    bs_height: float = 10.0
    coverage: float = 500.0
    lane_velocities: tuple[float, ...] = (20.0, 25.0, 30.0)
    slot_duration: float = 0.02
    bandwidth: float = 1e6
    noise_power: float = 1e-9
    ref_gain: float = 1e-3  # -30 dB at 1 m
    path_loss_exponent: float = 2.0
    wavelength: float = 7.0
    comp_intensity: float = 500.0
    switched_capacitance: float = 1e-28
    max_offload_power: float = 1.0
    max_local_power: float = 1.0
    arrival_rate: float = 3e6
    safety_time: float = 4.0
    buffer_capacity: float | None = None  # None -> 40 slots of mean arrivals
    reward_weights: tuple[float, float] = (0.9, 0.1)
    rng_seed: int = 0
    target_lane: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "lane_velocities", tuple(float(v) for v in self.lane_velocities))
        object.__setattr__(self, "reward_weights", tuple(float(w) for w in self.reward_weights))
        problems = []
        positive = (
            "lane_width", "coverage", "slot_duration", "bandwidth", "noise_power",
            "ref_gain", "wavelength", "comp_intensity", "switched_capacitance",
            "max_offload_power", "max_local_power", "safety_time",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if self.arrival_rate < 0:
            problems.append("arrival_rate must be >= 0")
        elif self.arrival_rate == 0 and self.buffer_capacity is None:
            problems.append("a zero arrival_rate needs an explicit buffer_capacity")
        if self.first_lane_offset < 0 or self.bs_height < 0:
            problems.append("first_lane_offset and bs_height must be >= 0")
        if self.path_loss_exponent < 1:
            problems.append("path_loss_exponent must be >= 1")
        if self.num_antennas < 1 or self.num_lanes < 1:
            problems.append("num_antennas and num_lanes must be >= 1")
        if len(self.lane_velocities) != self.num_lanes:
            problems.append("lane_velocities needs one entry per lane")
        if any(v < 0 for v in self.lane_velocities):
            problems.append("lane velocities must be >= 0")
        if self.num_lanes + 1 > self.num_antennas:
            # target plus one interferer per lane must stay ZF-decodable
            problems.append("num_lanes + 1 active vehicles exceed num_antennas")
        if not 1 <= self.target_lane <= self.num_lanes:
            problems.append("target_lane out of range")
        elif self.lane_velocities[self.target_lane - 1] <= 0:
            problems.append("target lane velocity must be > 0")
        if any(v * self.slot_duration >= self.coverage for v in self.lane_velocities):
            problems.append("a vehicle would cross the coverage in one slot")
        if self.buffer_capacity is not None and not self.buffer_capacity > 0:
            problems.append("buffer_capacity must be > 0")
        if len(self.reward_weights) != 2 or any(w < 0 for w in self.reward_weights):
            problems.append("reward_weights must be two non-negative numbers")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def capacity_bits(self) -> int:
        if self.buffer_capacity is not None:
            return int(self.buffer_capacity)
        return int(round(40 * self.arrival_rate * self.slot_duration))

    @property
    def max_cpu_frequency(self) -> float:
        return (self.max_local_power / self.switched_capacitance) ** (1.0 / 3.0)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["lane_velocities"] = list(self.lane_velocities)
        out["reward_weights"] = list(self.reward_weights)
        return out

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ScenarioConfig":
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
        return cls(**dict(values))


@dataclass(frozen=True)
class VehiclePose:
    lane: int
    d: float
    lateral: float
    velocity: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.d, self.lateral, 0.0])


def lateral_offset(lane: int, cfg: ScenarioConfig) -> float:
    """Distance along y between the antennas and a vehicle on ``lane`` (1-based)."""
    if not 1 <= lane <= cfg.num_lanes:
        raise ConfigError(f"lane {lane} outside 1..{cfg.num_lanes}")
    return (lane - 1) * cfg.lane_width + cfg.first_lane_offset


def entry_pose(lane: int, cfg: ScenarioConfig) -> VehiclePose:
    return VehiclePose(
        lane=lane,
        d=-cfg.coverage / 2,
        lateral=lateral_offset(lane, cfg),
        velocity=cfg.lane_velocities[lane - 1],
    )


def advance(pose: VehiclePose, slot_duration: float) -> VehiclePose:
    return dataclasses.replace(pose, d=pose.d + pose.velocity * slot_duration)


def max_vehicles(cfg: ScenarioConfig) -> int:
    """Upper bound on vehicles in coverage under the safety-time spacing rule."""
    total = 0
    for v in cfg.lane_velocities:
        if v > 0:
            total += math.floor(cfg.coverage / (v * cfg.safety_time) + _FLOOR_EPS)
    return total


def slots_on_lane(cfg: ScenarioConfig, lane: int) -> int:
    """Episode length for a vehicle on ``lane``; truncated so it never leaves coverage."""
    v = cfg.lane_velocities[lane - 1]
    if v <= 0:
        raise ConfigError("a stationary lane has no finite episode length")
    return math.floor(cfg.coverage / (v * cfg.slot_duration) + _FLOOR_EPS)


def bs_position(cfg: ScenarioConfig) -> np.ndarray:
    return np.array([0.0, 0.0, cfg.bs_height])
