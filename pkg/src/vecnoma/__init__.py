"""MIMO-NOMA vehicular edge computing simulator with a numpy DDPG power allocator."""

from vecnoma.scenario import ScenarioConfig, VehiclePose
from vecnoma.env import Action, Observation, VehicularEnv
from vecnoma.ddpg import AgentConfig, DDPGAgent

__all__ = [
    "Action",
    "AgentConfig",
    "DDPGAgent",
    "Observation",
    "ScenarioConfig",
    "VehicularEnv",
    "VehiclePose",
]

__version__ = "0.1.0"
