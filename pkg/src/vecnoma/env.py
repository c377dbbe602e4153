"""Episodic decision process for the target vehicle.

One episode is one pass of the target vehicle through the coverage area. At
each slot the vehicle observes its backlog, the SINR the base station reported
for the previous slot, and its position; it picks an offloading and a local
power; the environment serves the buffer, enqueues Poisson arrivals, moves
every vehicle and evolves the fading for the next slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vecnoma import channel as ch
from vecnoma.compute import BufferState, buffer_update, local_bits, offload_bits, sample_arrivals
from vecnoma.errors import ContractViolation, SingularChannelError
from vecnoma.scenario import (
    ScenarioConfig,
    VehiclePose,
    advance,
    bs_position,
    entry_pose,
    slots_on_lane,
)

TRACE_COLUMNS = (
    "episode", "slot", "d_m", "p_o", "p_l", "gamma", "B_bits",
    "arrivals", "d_local", "d_offload", "overflow", "reward",
)

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class Observation:
    buffer_bits: int
    gamma: float  # SINR reported for the previous slot
    d: float

    def as_array(self) -> np.ndarray:
        return np.array([self.buffer_bits, self.gamma, self.d], dtype=float)


@dataclass(frozen=True)
class Action:
    p_o: float
    p_l: float

    def clip(self, cfg: ScenarioConfig) -> "Action":
        p_o = min(max(float(self.p_o), 0.0), cfg.max_offload_power)
        p_l = min(max(float(self.p_l), 0.0), cfg.max_local_power)
        return Action(p_o, p_l)


@dataclass(frozen=True)
class StepDiagnostics:
    slot: int
    d: float  # position during the slot
    p_o: float
    p_l: float
    gamma: float  # SINR achieved in the slot
    buffer_bits: int  # backlog after the slot
    arrivals: int
    d_local: int
    d_offload: int
    overflow: int
    reward: float

    def trace_row(self, episode: int) -> list:
        return [episode, self.slot, self.d, self.p_o, self.p_l, self.gamma, self.buffer_bits,
                self.arrivals, self.d_local, self.d_offload, self.overflow, self.reward]


@dataclass(frozen=True)
class StepOutcome:
    next_obs: Observation
    reward: float
    done: bool
    info: StepDiagnostics


def reward_value(action: Action, buffer_bits: float, cfg: ScenarioConfig) -> float:
    """Negative weighted sum of total power (W) and backlog (Mbit)."""
    w1, w2 = cfg.reward_weights
    return -(w1 * (action.p_o + action.p_l) + w2 * buffer_bits / 1e6)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolation("discount must lie in [0, 1]")
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


class ObservationNormalizer:
    """Maps observations to roughly unit scale for the networks.

    Backlog is divided by buffer capacity and position by D/2. SINR goes
    through log2(1 + gamma) and is divided by a running maximum, seeded with
    the mean interference-free SINR at full power at the closest approach.
    """

    def __init__(self, cfg: ScenarioConfig, gamma_scale: float | None = None):
        self.capacity = float(cfg.capacity_bits)
        self.half_coverage = cfg.coverage / 2
        if gamma_scale is None:
            lateral = (cfg.target_lane - 1) * cfg.lane_width + cfg.first_lane_offset
            nearest = math.hypot(lateral, cfg.bs_height) or 1.0
            gain = cfg.ref_gain / nearest**cfg.path_loss_exponent
            gamma_ref = cfg.max_offload_power * cfg.num_antennas * gain / cfg.noise_power
            gamma_scale = math.log2(1.0 + gamma_ref)
        self.gamma_scale = float(gamma_scale)

    def __call__(self, obs: Observation, update: bool = True) -> np.ndarray:
        g = math.log2(1.0 + obs.gamma)
        if update and g > self.gamma_scale:
            self.gamma_scale = g
        return np.array([
            obs.buffer_bits / self.capacity,
            min(g / self.gamma_scale, 1.0),
            obs.d / self.half_coverage,
        ])


def normalize_observation(obs: Observation, normalizer: ObservationNormalizer) -> np.ndarray:
    return normalizer(obs)


class VehicularEnv:
    """Target vehicle on ``cfg.target_lane`` plus interferers that enter at d = 0.

    Random streams for arrivals and fading are separate generators so that a
    policy's actions never shift the exogenous randomness.
    """

    def __init__(self, cfg: ScenarioConfig,
                 arrival_rng: np.random.Generator | None = None,
                 fading_rng: np.random.Generator | None = None,
                 record_channel: bool = False):
        self.cfg = cfg
        if arrival_rng is None or fading_rng is None:
            a_seed, f_seed = np.random.SeedSequence(cfg.rng_seed).spawn(2)
            arrival_rng = arrival_rng or np.random.default_rng(a_seed)
            fading_rng = fading_rng or np.random.default_rng(f_seed)
        self.arrival_rng = arrival_rng
        self.fading_rng = fading_rng
        self.episode_length = slots_on_lane(cfg, cfg.target_lane)
        self._bs = bs_position(cfg)
        self.record_channel = record_channel
        self.channel_rows: list[dict] = []
        self.done = True
        self.slot = 0

    @classmethod
    def from_seed(cls, cfg: ScenarioConfig, seed, **kwargs) -> "VehicularEnv":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        a_seed, f_seed = ss.spawn(2)
        return cls(cfg, np.random.default_rng(a_seed), np.random.default_rng(f_seed), **kwargs)

    @property
    def poses(self) -> list[VehiclePose]:
        return [self.target] + self.interferers

    @property
    def num_active(self) -> int:
        return 1 + len(self.interferers)

    def _path_losses(self) -> np.ndarray:
        cfg = self.cfg
        return np.array([ch.path_loss(p.position, self._bs, cfg.ref_gain, cfg.path_loss_exponent)
                         for p in self.poses])

    def _correlations(self) -> np.ndarray:
        cfg = self.cfg
        return np.array([ch.doppler_correlation(p, self._bs, cfg.wavelength, cfg.slot_duration)
                         for p in self.poses])

    def _detect(self, small: ch.SmallScaleState) -> np.ndarray:
        H = ch.compose_channel(small.h, self._path_losses())
        _, g_norm_sq = ch.zf_detector(H)
        return g_norm_sq

    def _evolve_channel(self) -> None:
        base = ch.SmallScaleState(self.small.h, self._correlations())
        for _ in range(_MAX_REDRAWS):
            nxt = ch.evolve_small_scale(base, self.fading_rng)
            try:
                g = self._detect(nxt)
            except SingularChannelError:
                continue
            self.small, self.g_norm_sq = nxt, g
            return
        raise SingularChannelError("no invertible channel after repeated redraws")

    def reset(self) -> Observation:
        cfg = self.cfg
        self.target = entry_pose(cfg.target_lane, cfg)
        self.interferers: list[VehiclePose] = []
        self.buffer = BufferState(cfg.capacity_bits // 2, cfg.capacity_bits)
        self.channel_rows = []
        for _ in range(_MAX_REDRAWS):
            h0 = ch.complex_normal(self.fading_rng, (cfg.num_antennas, 1))
            small = ch.SmallScaleState(h0, self._correlations())
            try:
                g0 = self._detect(small)
                break
            except SingularChannelError:
                continue
        else:
            raise SingularChannelError("no invertible initial channel")
        self.small = small
        gamma0 = float(ch.sinr(cfg.max_offload_power, g0[0], cfg.noise_power))
        self._evolve_channel()
        self.slot = 1
        self.done = False
        return Observation(self.buffer.backlog, gamma0, self.target.d)

    def step(self, action: Action) -> StepOutcome:
        if self.done:
            raise ContractViolation("step() called on a finished episode; call reset()")
        cfg = self.cfg
        act = action.clip(cfg)
        d_now = self.target.d
        gamma = float(ch.sinr(act.p_o, self.g_norm_sq[0], cfg.noise_power))
        if self.record_channel:
            self.channel_rows.append({
                "slot": self.slot, "g_norm_sq": self.g_norm_sq.tolist(),
                "rho": self.small.rho.tolist(), "target_sinr": gamma,
            })
        arrivals = sample_arrivals(cfg, self.arrival_rng)
        self.buffer, thr = buffer_update(self.buffer, local_bits(act.p_l, cfg),
                                         offload_bits(gamma, cfg), arrivals)
        reward = reward_value(act, self.buffer.backlog, cfg)

        self.target = advance(self.target, cfg.slot_duration)
        self.interferers = [advance(p, cfg.slot_duration) for p in self.interferers]
        if not self.interferers and self.target.d >= 0:
            self.interferers = [entry_pose(j, cfg) for j in range(1, cfg.num_lanes + 1)]
            fresh = ch.complex_normal(self.fading_rng, (cfg.num_antennas, cfg.num_lanes))
            self.small = ch.SmallScaleState(np.concatenate([self.small.h, fresh], axis=1),
                                            np.ones(1 + cfg.num_lanes))

        info = StepDiagnostics(self.slot, d_now, act.p_o, act.p_l, gamma, self.buffer.backlog,
                               thr.arrivals, thr.d_local, thr.d_offload, thr.overflow, reward)
        self.done = self.slot >= self.episode_length
        if not self.done:
            self._evolve_channel()
        self.slot += 1
        obs = Observation(self.buffer.backlog, gamma, self.target.d)
        return StepOutcome(obs, reward, self.done, info)
