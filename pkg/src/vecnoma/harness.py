"""Experiment runners: configuration, seeding, run directories and file outputs.

Configuration precedence, lowest to highest: dataclass defaults, JSON config
file, ``VECNOMA_*`` environment variables, explicit keyword overrides (the CLI
flags). The JSON file holds ScenarioConfig fields at top level and an optional
``"agent"`` object with AgentConfig fields.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from vecnoma.baselines import GDLocalPolicy, GDOffloadPolicy
from vecnoma.channel import write_channel_trace
from vecnoma.ddpg import (ActorPolicy, AgentConfig, DDPGAgent, EvalSummary, evaluate, run_episode,
                          train)
from vecnoma.env import TRACE_COLUMNS, VehicularEnv
from vecnoma.errors import ConfigError
from vecnoma.scenario import ScenarioConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "VECNOMA_"
AGENT_ENV_PREFIX = "VECNOMA_AGENT_"
POLICIES = ("optimal", "gd-local", "gd-offload")
STREAMS = ("arrivals", "fading", "ou", "replay", "init")
CURVE_COLUMNS = ("episode", "mean_slot_reward")
COMPARE_COLUMNS = ("policy", "avg_total_power_W", "avg_p_o_W", "avg_p_l_W", "avg_buffer_bits",
                   "discounted_return", "overflow_total", "power_reduction_pct")
SWEEP_COLUMNS = ("arrival_rate", "policy", "discounted_return", "avg_total_power_W",
                 "avg_buffer_bits", "avg_reward")
_EVAL_KEY = 7  # separates evaluation episode seeds from the training streams


# ---------------------------------------------------------------- configuration

def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _env_overrides(environ: Mapping[str, str], prefix: str, fields: Sequence[str],
                   exclude: str | None = None) -> dict[str, Any]:
    out = {}
    for key, raw in environ.items():
        if not key.startswith(prefix) or (exclude and key.startswith(exclude)):
            continue
        name = key[len(prefix):].lower()
        if name in fields:
            out[name] = _parse_scalar(raw)
    return out


def load_config(path: str | Path | None = None,
                scenario_overrides: Mapping[str, Any] | None = None,
                agent_overrides: Mapping[str, Any] | None = None,
                environ: Mapping[str, str] | None = None) -> tuple[ScenarioConfig, AgentConfig]:
    """Builds both configs; unknown keys anywhere raise ConfigError naming them all."""
    environ = os.environ if environ is None else environ
    scen: dict[str, Any] = {}
    agent: dict[str, Any] = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        agent = dict(raw.pop("agent", {}) or {})
        scen = raw
    scen_fields = ScenarioConfig.field_names()
    agent_fields = [f.name for f in dataclasses.fields(AgentConfig)]
    bad = sorted(set(scen) - set(scen_fields)) + sorted(f"agent.{k}" for k in set(agent) - set(agent_fields))
    if bad:
        raise ConfigError(f"unknown configuration keys: {', '.join(bad)}")
    scen.update(_env_overrides(environ, ENV_PREFIX, scen_fields, exclude=AGENT_ENV_PREFIX))
    agent.update(_env_overrides(environ, AGENT_ENV_PREFIX, agent_fields))
    scen.update({k: v for k, v in (scenario_overrides or {}).items() if v is not None})
    agent.update({k: v for k, v in (agent_overrides or {}).items() if v is not None})
    return ScenarioConfig.from_mapping(scen), AgentConfig.from_mapping(agent)


def config_hash(scenario: ScenarioConfig, agent: AgentConfig | None = None) -> str:
    blob = json.dumps({"scenario": scenario.to_dict(),
                       "agent": agent.to_dict() if agent else None}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:8]


# ---------------------------------------------------------------- seeding

def derive_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per consumer, all derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def eval_env_factory(scenario: ScenarioConfig, seed: int, record_channel: bool = False):
    """Episode k of an evaluation always sees the same arrivals and fading."""
    def factory(k: int) -> VehicularEnv:
        return VehicularEnv.from_seed(scenario, np.random.SeedSequence(seed, spawn_key=(_EVAL_KEY, k)),
                                      record_channel=record_channel)
    return factory


# ---------------------------------------------------------------- run bookkeeping

@dataclass
class RunManifest:
    config: dict[str, Any]
    seed: int
    mode: str
    policy: str | None
    checkpoint: str | None
    output_dir: str

    def write(self) -> Path:
        path = Path(self.output_dir) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def unique_run_dir(out: str | Path, mode: str, seed: int, tag: str) -> Path:
    base = Path(out) / f"{mode}_seed{seed}_{tag}"
    path, n = base, 1
    while path.exists():
        n += 1
        path = base.with_name(f"{base.name}_{n}")
    path.mkdir(parents=True)
    return path


def write_csv(path: str | Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_json(path: str | Path, data: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- runners

def build_agent(scenario: ScenarioConfig, agent_cfg: AgentConfig, seed: int):
    streams = derive_streams(seed)
    agent = DDPGAgent(scenario, agent_cfg, streams["init"], streams["ou"], streams["replay"])
    env = VehicularEnv(scenario, streams["arrivals"], streams["fading"])
    return agent, env


def run_train(scenario: ScenarioConfig, agent_cfg: AgentConfig, seed: int, out: str | Path,
              episodes: int | None = None) -> Path:
    """Trains one agent; writes manifest, learning curve and checkpoints. Returns the run dir."""
    if episodes is not None:
        agent_cfg = dataclasses.replace(agent_cfg, episodes=episodes)
    run_dir = unique_run_dir(out, "train", seed, config_hash(scenario, agent_cfg))
    RunManifest({"scenario": scenario.to_dict(), "agent": agent_cfg.to_dict()}, seed, "train",
                "optimal", str(run_dir / "actor.ckpt"), str(run_dir)).write()
    agent, env = build_agent(scenario, agent_cfg, seed)
    curve_path = run_dir / "learning_curve.csv"
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)

        def record(ep: int, value: float) -> None:
            writer.writerow([ep, repr(value)])
            fh.flush()
            log.info("episode %d/%d mean slot reward %.5f", ep, agent_cfg.episodes, value)

        train(lambda: env, agent, checkpoint_dir=run_dir, on_episode=record)
    return run_dir


# modules whose code determines training output byte for byte
_TRAINING_SOURCES = ("scenario", "channel", "compute", "env", "neural", "ddpg")


def training_source_hash() -> str:
    pkg = Path(__file__).parent
    h = hashlib.sha256()
    for name in _TRAINING_SOURCES:
        h.update((pkg / f"{name}.py").read_bytes())
    return h.hexdigest()[:12]


def cached_train(scenario: ScenarioConfig, agent_cfg: AgentConfig, seed: int,
                 cache_root: str | Path, fresh: bool = False) -> Path:
    """Training run reused across invocations while config, seed and code are unchanged."""
    key = hashlib.sha256(json.dumps({
        "scenario": scenario.to_dict(), "agent": agent_cfg.to_dict(), "seed": seed,
        "source": training_source_hash()}, sort_keys=True).encode()).hexdigest()[:16]
    slot = Path(cache_root) / key
    marker = slot / "run_dir.txt"
    if not fresh and marker.exists():
        run_dir = slot / Path(marker.read_text().strip()).name
        if (run_dir / "actor.ckpt").exists():
            log.info("reusing cached training run %s", run_dir)
            return run_dir
    slot.mkdir(parents=True, exist_ok=True)
    run_dir = run_train(scenario, agent_cfg, seed, slot)
    marker.write_text(run_dir.name + "\n")
    return run_dir


def make_policy(policy: str, scenario: ScenarioConfig, checkpoint: str | Path | None = None):
    if policy == "gd-local":
        return GDLocalPolicy(scenario)
    if policy == "gd-offload":
        return GDOffloadPolicy(scenario)
    if policy == "optimal":
        if checkpoint is None or not Path(checkpoint).exists():
            raise FileNotFoundError(f"policy 'optimal' needs an existing checkpoint, got {checkpoint}")
        return ActorPolicy.load(checkpoint, scenario)
    raise ConfigError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")


def evaluate_policy(policy: str, scenario: ScenarioConfig, episodes: int, seed: int,
                    checkpoint: str | Path | None = None, gamma: float = 0.99,
                    bins: int = 50, workers: int = 1) -> EvalSummary:
    return evaluate(make_policy(policy, scenario, checkpoint), eval_env_factory(scenario, seed),
                    episodes, gamma=gamma, bins=bins, workers=workers)


def run_eval(scenario: ScenarioConfig, agent_cfg: AgentConfig, policy: str, episodes: int,
             seed: int, out: str | Path, checkpoint: str | Path | None = None,
             bins: int = 50, workers: int = 1, channel_trace: bool = False) -> Path:
    """Writes summary.json, binned.csv and trace.csv for one policy.

    With ``channel_trace`` the first episode is replayed with channel
    recording on and its detector norms go to channel_trace.csv.
    """
    pol = make_policy(policy, scenario, checkpoint)
    run_dir = unique_run_dir(out, f"eval-{policy}", seed, config_hash(scenario, agent_cfg))
    RunManifest({"scenario": scenario.to_dict(), "agent": agent_cfg.to_dict()}, seed, "eval",
                policy, str(checkpoint) if checkpoint else None, str(run_dir)).write()
    summary = evaluate(pol, eval_env_factory(scenario, seed), episodes,
                       gamma=agent_cfg.gamma, bins=bins, workers=workers)
    write_json(run_dir / "summary.json", {"policy": policy, **summary.as_dict()})
    summary.binned.write_csv(run_dir / "binned.csv")
    write_csv(run_dir / "trace.csv", TRACE_COLUMNS,
              (s.trace_row(ep) for ep, tr in enumerate(summary.traces) for s in tr))
    if channel_trace:
        env = eval_env_factory(scenario, seed, record_channel=True)(0)
        pol.reset()
        run_episode(pol, env)
        write_channel_trace(run_dir / "channel_trace.csv", env.channel_rows, scenario.num_antennas)
    return run_dir


def power_reduction_pct(p_opt: float, p_base: float) -> float:
    return (1.0 - p_opt / p_base) * 100.0


def compare_policies(scenario: ScenarioConfig, checkpoint: str | Path, episodes: int, seed: int,
                     gamma: float = 0.99, bins: int = 50,
                     workers: int = 1) -> dict[str, EvalSummary]:
    return {p: evaluate_policy(p, scenario, episodes, seed, checkpoint, gamma, bins, workers)
            for p in POLICIES}


def comparison_rows(summaries: Mapping[str, EvalSummary]) -> list[list]:
    """One row per policy. The reduction column is the optimal policy's power
    saving against that row's policy, so it is 0 on the optimal row."""
    p_opt = summaries["optimal"].avg_total_power_W
    rows = []
    for name, s in summaries.items():
        rows.append([name, s.avg_total_power_W, s.avg_p_o, s.avg_p_l, s.avg_buffer_bits,
                     s.discounted_return, s.overflow_total,
                     power_reduction_pct(p_opt, s.avg_total_power_W)])
    return rows


def run_compare(scenario: ScenarioConfig, agent_cfg: AgentConfig, checkpoint: str | Path,
                episodes: int, seed: int, out: str | Path, bins: int = 50,
                workers: int = 1) -> Path:
    if not Path(checkpoint).exists():
        raise FileNotFoundError(f"checkpoint {checkpoint} not found")
    run_dir = unique_run_dir(out, "compare", seed, config_hash(scenario, agent_cfg))
    RunManifest({"scenario": scenario.to_dict(), "agent": agent_cfg.to_dict()}, seed, "baseline",
                ",".join(POLICIES), str(checkpoint), str(run_dir)).write()
    summaries = compare_policies(scenario, checkpoint, episodes, seed, agent_cfg.gamma, bins, workers)
    rows = comparison_rows(summaries)
    write_csv(run_dir / "compare.csv", COMPARE_COLUMNS, rows)
    write_json(run_dir / "compare.json", {r[0]: dict(zip(COMPARE_COLUMNS[1:], r[1:])) for r in rows})
    for name, s in summaries.items():
        s.binned.write_csv(run_dir / f"binned_{name}.csv")
    return run_dir


def export_sweep(scenario: ScenarioConfig, agent_cfg: AgentConfig, rates: Sequence[float],
                 episodes: int, seed: int, out: str | Path,
                 checkpoints: Sequence[str | Path] | None = None,
                 shared_checkpoint: str | Path | None = None, workers: int = 1) -> Path:
    """Reward, power and buffer of all three policies for each arrival rate.

    Either one checkpoint per rate or a single shared checkpoint. The buffer
    capacity is pinned to the base scenario's so that observation scaling
    matches the one the policy was trained with.
    """
    if checkpoints is None:
        if shared_checkpoint is None:
            raise ConfigError("sweep needs per-rate checkpoints or a shared checkpoint")
        checkpoints = [shared_checkpoint] * len(rates)
    if len(checkpoints) != len(rates):
        raise ConfigError("one checkpoint per arrival rate")
    run_dir = unique_run_dir(out, "sweep", seed, config_hash(scenario, agent_cfg))
    RunManifest({"scenario": scenario.to_dict(), "agent": agent_cfg.to_dict(), "rates": list(rates)},
                seed, "baseline", ",".join(POLICIES),
                ",".join(str(c) for c in checkpoints), str(run_dir)).write()
    rows = []
    for rate, ckpt in zip(rates, checkpoints):
        scen = dataclasses.replace(scenario, arrival_rate=float(rate),
                                   buffer_capacity=float(scenario.capacity_bits))
        for name, s in compare_policies(scen, ckpt, episodes, seed, agent_cfg.gamma,
                                        workers=workers).items():
            rows.append([float(rate), name, s.discounted_return, s.avg_total_power_W,
                         s.avg_buffer_bits, s.avg_reward])
    write_csv(run_dir / "sweep.csv", SWEEP_COLUMNS, rows)
    return run_dir
