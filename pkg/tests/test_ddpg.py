import numpy as np
import pytest

from vecnoma.ddpg import (AgentConfig, DDPGAgent, ReplayBuffer, actor_gradient, critic_target,
                          evaluate, make_actor, make_critic, run_episode, select_action, train)
from vecnoma.env import Action, VehicularEnv
from vecnoma.errors import ConfigError
from vecnoma.neural import OuState
from vecnoma.scenario import ScenarioConfig

SMALL = AgentConfig(hidden=(16, 12), batch_size=8, replay_capacity=500)


def make_agent(scenario, cfg=SMALL, seed=0):
    r = [np.random.default_rng([seed, k]) for k in range(3)]
    return DDPGAgent(scenario, cfg, *r)


def test_config_validation():
    with pytest.raises(ConfigError):
        AgentConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        AgentConfig.from_mapping({"gama": 0.9})
    assert AgentConfig.from_mapping(AgentConfig().to_dict()) == AgentConfig()


def test_replay_ring_order():
    buf = ReplayBuffer(3)
    for k in range(5):
        buf.add(np.full(3, k), (k, k), -k, np.full(3, k + 1))
    assert len(buf) == 3
    assert [buf[i].r for i in range(3)] == [-2.0, -3.0, -4.0]


def test_replay_sampling_uniform():
    buf = ReplayBuffer(10)
    for k in range(10):
        buf.add(np.zeros(3), (0, 0), k, np.zeros(3))
    idx = buf.sample_indices(100_000, np.random.default_rng(0))
    counts = np.bincount(idx, minlength=10)
    # chi-square with 9 dof, 0.999 quantile is 27.9
    chi2 = np.sum((counts - 10_000) ** 2 / 10_000)
    assert chi2 < 27.9


def test_select_action_clips():
    actor = make_actor((4,), np.random.default_rng(0))
    scale = np.array([1.0, 1.0])
    ou = OuState(np.array([5.0, -5.0]), theta=0.0, sigma=0.0)
    a = select_action(actor, np.zeros(3), scale, ou, np.random.default_rng(0), explore=True)
    assert (a.p_o, a.p_l) == (1.0, 0.0)
    a1 = select_action(actor, np.ones(3), scale)
    a2 = select_action(actor, np.ones(3), scale)
    assert a1 == a2


def test_actor_gradient_chain_rule():
    rng = np.random.default_rng(7)
    actor = make_actor((6, 5), rng)
    critic = make_critic((7, 4), rng)
    actor.weights[-1][...] = rng.normal(size=actor.weights[-1].shape)
    critic.weights[-1][...] = rng.normal(size=critic.weights[-1].shape)
    s = rng.normal(size=(4, 3))

    def objective():
        return float(critic(np.concatenate([s, actor(s)], axis=1)).mean())

    grads, value = actor_gradient(actor, critic, s)
    assert value == pytest.approx(objective())
    num = np.zeros_like(actor.params)
    for i in range(actor.params.size):
        old = actor.params[i]
        actor.params[i] = old + 1e-6
        up = objective()
        actor.params[i] = old - 1e-6
        down = objective()
        actor.params[i] = old
        num[i] = (up - down) / 2e-6
    assert np.max(np.abs(grads - num)) / np.max(np.abs(num)) < 1e-4


def test_critic_target_has_no_terminal_mask(short_cfg):
    agent = make_agent(short_cfg)
    for k in range(10):
        agent.replay.add(np.zeros(3), (0.1, 0.1), -1.0, np.ones(3))
    batch = agent.replay.sample(4, np.random.default_rng(0))
    y = critic_target(batch, agent.target_actor, agent.target_critic, 0.5)
    q = agent.target_critic(np.concatenate([np.ones((4, 3)), agent.target_actor(np.ones((4, 3)))], axis=1))
    np.testing.assert_allclose(y, -1.0 + 0.5 * q[:, 0])


def test_no_updates_below_batch():
    cfg = ScenarioConfig(coverage=10.0)  # 20 slots
    agent = make_agent(cfg, AgentConfig(hidden=(8,), batch_size=64, episodes=1))
    res = train(lambda: VehicularEnv.from_seed(cfg, 0), agent)
    assert agent.updates == 0
    assert len(res.curve) == 1


def test_targets_start_equal_and_drift(short_cfg):
    agent = make_agent(short_cfg)
    np.testing.assert_array_equal(agent.target_actor.params, agent.actor.params)
    train(lambda: VehicularEnv.from_seed(short_cfg, 0), agent, episodes=1)
    assert agent.updates == 200 - SMALL.batch_size
    assert not np.array_equal(agent.target_actor.params, agent.actor.params)
    assert np.all(np.isfinite(agent.critic.params))


def test_training_is_deterministic(short_cfg):
    curves = []
    for _ in range(2):
        agent = make_agent(short_cfg, seed=4)
        env = VehicularEnv.from_seed(short_cfg, 4)
        curves.append(train(lambda: env, agent, episodes=2).curve)
    assert curves[0] == curves[1]


def test_checkpoint_policy_round_trip(short_cfg, tmp_path):
    agent = make_agent(short_cfg)
    path = agent.save(tmp_path)
    from vecnoma.ddpg import ActorPolicy
    pol = ActorPolicy.load(path, short_cfg)
    obs = VehicularEnv.from_seed(short_cfg, 0).reset()
    assert pol.act(obs) == agent.policy().act(obs)


def test_evaluate_threads_match_serial(short_cfg):
    pol = make_agent(short_cfg).policy()
    factory = lambda k: VehicularEnv.from_seed(short_cfg, [0, k])
    a = evaluate(pol, factory, 3)
    b = evaluate(pol, factory, 3, workers=3)
    assert a.as_dict() == b.as_dict()
    assert a.binned.episodes == 3
    assert len(a.traces[0]) == 200


def test_run_episode_lengths(short_cfg):
    pol = make_agent(short_cfg).policy()
    assert len(run_episode(pol, VehicularEnv.from_seed(short_cfg, 0))) == 200
