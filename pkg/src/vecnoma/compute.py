"""Task buffer, DVFS local execution and Shannon-rate offloading.

Buffer contents are whole bits held as Python ints so the per-slot
conservation law holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from vecnoma.errors import ContractViolation
from vecnoma.scenario import ScenarioConfig


@dataclass(frozen=True)
class BufferState:
    backlog: int
    capacity: int

    def __post_init__(self) -> None:
        if not 0 <= self.backlog <= self.capacity:
            raise ContractViolation(f"backlog {self.backlog} outside [0, {self.capacity}]")


@dataclass(frozen=True)
class SlotThroughput:
    """Bits actually served on each path, bits arrived and bits dropped on overflow."""

    d_local: int
    d_offload: int
    arrivals: int
    overflow: int = 0

    @property
    def served(self) -> int:
        return self.d_local + self.d_offload


def cpu_frequency(p_l: float, cfg: ScenarioConfig) -> float:
    if p_l < 0:
        raise ContractViolation("local power must be non-negative")
    return min((p_l / cfg.switched_capacitance) ** (1.0 / 3.0), cfg.max_cpu_frequency)


def local_bits(p_l: float, cfg: ScenarioConfig) -> float:
    return cfg.slot_duration * cpu_frequency(p_l, cfg) / cfg.comp_intensity


def offload_bits(gamma: float, cfg: ScenarioConfig) -> float:
    if gamma < 0:
        raise ContractViolation("SINR must be non-negative")
    return cfg.slot_duration * cfg.bandwidth * math.log2(1.0 + gamma)


def buffer_update(state: BufferState, local_capacity: float, offload_capacity: float,
                  arrivals: int) -> tuple[BufferState, SlotThroughput]:
    """Serve the backlog, then enqueue arrivals up to capacity.

    Path capacities are floored to whole bits. When together they exceed the
    backlog, the backlog is split between the paths in proportion to their
    capacities.
    """
    if local_capacity < 0 or offload_capacity < 0 or arrivals < 0:
        raise ContractViolation("buffer_update inputs must be non-negative")
    cap_l = int(math.floor(local_capacity))
    cap_o = int(math.floor(offload_capacity))
    b = state.backlog
    if cap_l + cap_o <= b:
        served_l, served_o = cap_l, cap_o
    else:
        served_l = b * cap_l // (cap_l + cap_o)
        served_o = b - served_l
    remaining = b - served_l - served_o
    arrivals = int(arrivals)
    room = state.capacity - remaining
    overflow = max(0, arrivals - room)
    new = BufferState(remaining + arrivals - overflow, state.capacity)
    return new, SlotThroughput(served_l, served_o, arrivals, overflow)


def sample_arrivals(cfg: ScenarioConfig, rng: np.random.Generator) -> int:
    return int(rng.poisson(cfg.arrival_rate * cfg.slot_duration))
