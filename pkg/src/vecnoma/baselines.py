"""Greedy comparison policies: saturate one power budget, top up with the other.

Neither policy sees the channel directly. Both infer the inverse channel gain
g_hat = p / gamma from the SINR reported for the previous slot and the power
they used in it, then invert the Shannon and DVFS laws to size the other path.
"""

from __future__ import annotations

from dataclasses import dataclass

from vecnoma.compute import local_bits, offload_bits
from vecnoma.env import Action, Observation
from vecnoma.scenario import ScenarioConfig


@dataclass
class ChannelGainEstimate:
    last_gamma: float = 0.0
    last_power: float = 0.0

    def inverse_gain(self) -> float | None:
        """Noise-scaled detector norm ||g||^2 sigma^2, or None without a usable pair."""
        if self.last_power > 0 and self.last_gamma > 0:
            return self.last_power / self.last_gamma
        return None


def gd_local_action(obs: Observation, estimate: ChannelGainEstimate, cfg: ScenarioConfig) -> Action:
    p_l = cfg.max_local_power
    remaining = max(0.0, obs.buffer_bits - local_bits(p_l, cfg))
    if remaining == 0:
        return Action(0.0, p_l)
    g_hat = estimate.inverse_gain()
    if g_hat is None:
        return Action(cfg.max_offload_power, p_l)
    needed_sinr = 2.0 ** (remaining / (cfg.slot_duration * cfg.bandwidth)) - 1.0
    return Action(min(cfg.max_offload_power, needed_sinr * g_hat), p_l)


def gd_offload_action(obs: Observation, estimate: ChannelGainEstimate, cfg: ScenarioConfig) -> Action:
    p_o = cfg.max_offload_power
    if obs.buffer_bits <= 0:
        return Action(p_o, 0.0)
    g_hat = estimate.inverse_gain()
    if g_hat is None:
        return Action(p_o, cfg.max_local_power)
    remaining = max(0.0, obs.buffer_bits - offload_bits(p_o / g_hat, cfg))
    freq = remaining * cfg.comp_intensity / cfg.slot_duration
    return Action(p_o, min(cfg.max_local_power, cfg.switched_capacitance * freq**3))


class _GreedyPolicy:
    rule = staticmethod(gd_local_action)

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.reset()

    def reset(self) -> None:
        # the first reported SINR is measured at the full-power probe
        self.estimate = ChannelGainEstimate(0.0, self.cfg.max_offload_power)

    def act(self, obs: Observation) -> Action:
        self.estimate.last_gamma = obs.gamma
        action = self.rule(obs, self.estimate, self.cfg)
        self.estimate.last_power = action.p_o
        return action


class GDLocalPolicy(_GreedyPolicy):
    rule = staticmethod(gd_local_action)


class GDOffloadPolicy(_GreedyPolicy):
    rule = staticmethod(gd_offload_action)


class ZeroPolicy:
    """Transmits nothing and computes nothing."""

    def reset(self) -> None:
        pass

    def act(self, obs: Observation) -> Action:
        return Action(0.0, 0.0)
