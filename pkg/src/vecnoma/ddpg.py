"""Deep deterministic policy gradient for the two-dimensional power action.

The actor maps a normalised observation to sigmoid outputs in [0, 1] that
scale to watts by (P_max,o, P_max,l). The critic sees the normalised
observation concatenated with the action divided by the same scale. Replay
stores actions in watts.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import numpy as np

from vecnoma.env import Action, Observation, ObservationNormalizer, StepDiagnostics, VehicularEnv
from vecnoma.env import discounted_return
from vecnoma.errors import ConfigError, TrainingDivergenceError
from vecnoma.metrics import DistanceBinnedSeries, bin_by_distance
from vecnoma.neural import (
    AdamState,
    DenseNet,
    OuState,
    adam_step,
    load_checkpoint,
    ou_sample,
    save_checkpoint,
    soft_update,
)
from vecnoma.scenario import ScenarioConfig

log = logging.getLogger(__name__)

OBS_DIM = 3
ACT_DIM = 2


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    episodes: int = 2000
    eval_episodes: int = 100
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    replay_capacity: int = 250_000
    hidden: tuple[int, ...] = (400, 300)
    ou_theta: float = 0.15
    ou_sigma: float = 0.02
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        problems = []
        if not 0.0 <= self.gamma <= 1.0:
            problems.append("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            problems.append("tau must lie in [0, 1]")
        for name in ("batch_size", "replay_capacity"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.episodes < 0 or self.eval_episodes < 0 or self.checkpoint_every < 0:
            problems.append("episode counts must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "AgentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown agent keys: {', '.join(unknown)}")
        return cls(**dict(values))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray  # watts
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self) -> int:
        return self.r.size


class ReplayBuffer:
    """Fixed-capacity ring; the oldest transition is overwritten once full."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, obs_dim))
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r: float, s_next) -> None:
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __getitem__(self, k: int) -> Transition:
        """k-th oldest stored transition."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        i = (self.cursor - self.size + k) % self.capacity
        return Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]), self.s_next[i].copy())

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        # uniform, with replacement; storage slots [0, size) are all live
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx])


def make_actor(hidden=(400, 300), rng: np.random.Generator | None = None) -> DenseNet:
    return DenseNet([OBS_DIM, *hidden, ACT_DIM], ["relu"] * len(hidden) + ["sigmoid"], rng)


def make_critic(hidden=(400, 300), rng: np.random.Generator | None = None) -> DenseNet:
    return DenseNet([OBS_DIM + ACT_DIM, *hidden, 1], ["relu"] * len(hidden) + ["identity"], rng)


def select_action(actor: DenseNet, s_norm: np.ndarray, scale: np.ndarray,
                  ou_state: OuState | None = None, rng: np.random.Generator | None = None,
                  explore: bool = False) -> Action:
    a = actor(s_norm) * scale
    if explore:
        a = a + ou_sample(ou_state, rng)
    a = np.clip(a, 0.0, scale)
    return Action(float(a[0]), float(a[1]))


def critic_target(batch: Batch, target_actor: DenseNet, target_critic: DenseNet,
                  gamma: float) -> np.ndarray:
    """r + gamma * Q'(s', mu'(s')) for every transition, without a terminal mask."""
    a_next = target_actor(batch.s_next)
    q_next = target_critic(np.concatenate([batch.s_next, a_next], axis=1))
    return batch.r + gamma * q_next[:, 0]


def update_critic(critic: DenseNet, adam: AdamState, batch: Batch, targets: np.ndarray,
                  scale: np.ndarray) -> float:
    """One Adam step on the mean squared TD error; returns the loss before the step."""
    x = np.concatenate([batch.s, batch.a / scale], axis=1)
    q, cache = critic.forward(x)
    diff = q[:, 0] - targets
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise TrainingDivergenceError("critic loss is not finite")
    grads, _ = critic.backward(cache, (2.0 / diff.size) * diff[:, None])
    adam_step(adam, critic.params, grads)
    return loss


def actor_gradient(actor: DenseNet, critic: DenseNet, s: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of mean Q(s, mu(s)) w.r.t. actor parameters, and that mean."""
    a, cache_a = actor.forward(s)
    q, cache_c = critic.forward(np.concatenate([s, a], axis=1))
    n = s.shape[0]
    _, grad_x = critic.backward(cache_c, np.full((n, 1), 1.0 / n), need_params=False)
    grads, _ = actor.backward(cache_a, grad_x[:, s.shape[1]:])
    return grads, float(q.mean())


def update_actor(actor: DenseNet, adam: AdamState, critic: DenseNet, batch: Batch) -> float:
    """One Adam ascent step on the critic's value of the actor's actions."""
    grads, objective = actor_gradient(actor, critic, batch.s)
    adam_step(adam, actor.params, -grads)
    return objective


class Policy(Protocol):
    def reset(self) -> None: ...

    def act(self, obs: Observation) -> Action: ...


class DDPGAgent:
    def __init__(self, scenario: ScenarioConfig, cfg: AgentConfig,
                 init_rng: np.random.Generator, ou_rng: np.random.Generator,
                 replay_rng: np.random.Generator):
        self.scenario = scenario
        self.cfg = cfg
        self.scale = np.array([scenario.max_offload_power, scenario.max_local_power])
        self.actor = make_actor(cfg.hidden, init_rng)
        self.critic = make_critic(cfg.hidden, init_rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        adam = dict(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        self.actor_adam = AdamState(self.actor.num_params, cfg.actor_lr, **adam)
        self.critic_adam = AdamState(self.critic.num_params, cfg.critic_lr, **adam)
        self.replay = ReplayBuffer(cfg.replay_capacity)
        self.ou = OuState.zeros(ACT_DIM, cfg.ou_theta, cfg.ou_sigma)
        self.ou_rng = ou_rng
        self.replay_rng = replay_rng
        self.normalizer = ObservationNormalizer(scenario)
        self.updates = 0
        self._scratch_a = np.empty(self.actor.num_params)
        self._scratch_c = np.empty(self.critic.num_params)

    def act(self, obs: Observation, explore: bool) -> tuple[np.ndarray, Action]:
        s = self.normalizer(obs, update=explore)
        return s, select_action(self.actor, s, self.scale, self.ou, self.ou_rng, explore)

    def learn(self) -> tuple[float, float] | None:
        """Critic, actor and target updates once the replay holds more than a batch."""
        if len(self.replay) <= self.cfg.batch_size:
            return None
        batch = self.replay.sample(self.cfg.batch_size, self.replay_rng)
        y = critic_target(batch, self.target_actor, self.target_critic, self.cfg.gamma)
        loss = update_critic(self.critic, self.critic_adam, batch, y, self.scale)
        objective = update_actor(self.actor, self.actor_adam, self.critic, batch)
        soft_update(self.target_critic.params, self.critic.params, self.cfg.tau, self._scratch_c)
        soft_update(self.target_actor.params, self.actor.params, self.cfg.tau, self._scratch_a)
        self.updates += 1
        return loss, objective

    def policy(self) -> "ActorPolicy":
        return ActorPolicy(self.actor.copy(), ObservationNormalizer(self.scenario, self.normalizer.gamma_scale),
                           self.scale.copy())

    def save(self, directory: str | Path, prefix: str = "") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {"gamma_scale": self.normalizer.gamma_scale}
        save_checkpoint(directory / f"{prefix}actor.ckpt", self.actor, meta)
        save_checkpoint(directory / f"{prefix}critic.ckpt", self.critic, meta)
        return directory / f"{prefix}actor.ckpt"


@dataclass
class ActorPolicy:
    """Deterministic learned policy for evaluation."""

    actor: DenseNet
    normalizer: ObservationNormalizer
    scale: np.ndarray

    def reset(self) -> None:
        pass

    def act(self, obs: Observation) -> Action:
        return select_action(self.actor, self.normalizer(obs, update=False), self.scale)

    @classmethod
    def load(cls, path: str | Path, scenario: ScenarioConfig) -> "ActorPolicy":
        net, meta = load_checkpoint(path)
        return cls(net, ObservationNormalizer(scenario, meta.get("gamma_scale")),
                   np.array([scenario.max_offload_power, scenario.max_local_power]))


@dataclass
class TrainResult:
    agent: DDPGAgent
    curve: list[float]


def _finite(agent: DDPGAgent) -> bool:
    return all(np.isfinite(n.params).all() for n in
               (agent.actor, agent.critic, agent.target_actor, agent.target_critic))


def train(env_factory: Callable[[], VehicularEnv], agent: DDPGAgent, episodes: int | None = None,
          checkpoint_dir: str | Path | None = None,
          on_episode: Callable[[int, float], None] | None = None) -> TrainResult:
    """Runs the training loop and returns the per-episode mean slot reward."""
    cfg = agent.cfg
    episodes = cfg.episodes if episodes is None else episodes
    env = env_factory()
    curve: list[float] = []
    for ep in range(episodes):
        obs = env.reset()
        agent.ou.reset()
        total, steps = 0.0, 0
        done = False
        try:
            while not done:
                s, action = agent.act(obs, explore=True)
                out = env.step(action)
                s_next = agent.normalizer(out.next_obs)
                agent.replay.add(s, (action.p_o, action.p_l), out.reward, s_next)
                agent.learn()
                total += out.reward
                steps += 1
                obs, done = out.next_obs, out.done
            if not _finite(agent):
                raise TrainingDivergenceError(f"non-finite parameters after episode {ep + 1}")
        except TrainingDivergenceError:
            if checkpoint_dir is not None:
                agent.save(checkpoint_dir, prefix="diverged_")
            raise
        curve.append(total / steps)
        if on_episode is not None:
            on_episode(ep + 1, curve[-1])
        if checkpoint_dir is not None and cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
            agent.save(Path(checkpoint_dir), prefix=f"ep{ep + 1:05d}_")
        log.debug("episode %d mean slot reward %.6f", ep + 1, curve[-1])
    if checkpoint_dir is not None:
        agent.save(checkpoint_dir)
    return TrainResult(agent, curve)


@dataclass
class EvalSummary:
    episodes: int
    avg_p_o: float
    avg_p_l: float
    avg_total_power_W: float
    avg_buffer_bits: float
    avg_reward: float
    discounted_return: float
    overflow_total: int
    episode_power: np.ndarray
    episode_buffer: np.ndarray
    episode_return: np.ndarray
    binned: DistanceBinnedSeries
    traces: list[list[StepDiagnostics]] = field(repr=False)

    def as_dict(self) -> dict[str, float]:
        return {
            "episodes": self.episodes,
            "avg_p_o_W": self.avg_p_o,
            "avg_p_l_W": self.avg_p_l,
            "avg_total_power_W": self.avg_total_power_W,
            "avg_buffer_bits": self.avg_buffer_bits,
            "avg_reward": self.avg_reward,
            "discounted_return": self.discounted_return,
            "overflow_total": self.overflow_total,
        }


def run_episode(policy: Policy, env: VehicularEnv) -> list[StepDiagnostics]:
    obs = env.reset()
    policy.reset()
    trace = []
    done = False
    while not done:
        out = env.step(policy.act(obs))
        trace.append(out.info)
        obs, done = out.next_obs, out.done
    return trace


def evaluate(policy: Policy, env_factory: Callable[[int], VehicularEnv], episodes: int,
             gamma: float = 0.99, bins: int = 50, workers: int = 1) -> EvalSummary:
    """Greedy rollouts; ``env_factory(k)`` builds the environment for episode k.

    With ``workers > 1`` episodes run on a thread pool, each on its own copy
    of the policy; results are merged in episode order.
    """
    def one(k: int) -> list[StepDiagnostics]:
        pol = copy.deepcopy(policy) if workers > 1 else policy
        return run_episode(pol, env_factory(k))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one, range(episodes)))
    else:
        traces = [one(k) for k in range(episodes)]

    power = np.array([np.mean([s.p_o + s.p_l for s in tr]) for tr in traces])
    buffer = np.array([np.mean([s.buffer_bits for s in tr]) for tr in traces])
    returns = np.array([discounted_return([s.reward for s in tr], gamma) for tr in traces])
    flat = [s for tr in traces for s in tr]
    env0 = env_factory(0)
    return EvalSummary(
        episodes=episodes,
        avg_p_o=float(np.mean([s.p_o for s in flat])),
        avg_p_l=float(np.mean([s.p_l for s in flat])),
        avg_total_power_W=float(np.mean([s.p_o + s.p_l for s in flat])),
        avg_buffer_bits=float(np.mean([s.buffer_bits for s in flat])),
        avg_reward=float(np.mean([s.reward for s in flat])),
        discounted_return=float(np.mean(returns)),
        overflow_total=int(sum(s.overflow for s in flat)),
        episode_power=power,
        episode_buffer=buffer,
        episode_return=returns,
        binned=bin_by_distance(traces, env0.cfg.coverage, bins),
        traces=traces,
    )
