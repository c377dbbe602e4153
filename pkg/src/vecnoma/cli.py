"""Command line entry point: ``vecnoma {train,eval,compare,sweep}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from typing import Any, Sequence

from vecnoma import harness
from vecnoma.ddpg import AgentConfig
from vecnoma.errors import ConfigError
from vecnoma.scenario import ScenarioConfig

log = logging.getLogger("vecnoma")

# flags owned by the subcommands themselves
_RESERVED = {"episodes", "eval_episodes"}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _field_type(f: dataclasses.Field) -> Any:
    hint = str(f.type)
    if "tuple" in hint:
        return _ints if "int" in hint else _floats
    if "bool" in hint:
        return lambda s: s.lower() in ("1", "true", "yes")
    if "int" in hint and "float" not in hint:
        return int
    return float


def _add_field_flags(parser: argparse.ArgumentParser, cls, group_title: str) -> list[str]:
    group = parser.add_argument_group(group_title)
    names = []
    for f in dataclasses.fields(cls):
        if f.name in _RESERVED:
            continue
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        group.add_argument(*flags, dest=f"{cls.__name__}.{f.name}", type=_field_type(f),
                           default=None, metavar=f.name.upper())
        names.append(f.name)
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecnoma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("train", "train a DDPG power-allocation agent"),
                            ("eval", "evaluate one policy"),
                            ("compare", "evaluate the learned policy against both greedy baselines"),
                            ("sweep", "compare all policies across arrival rates")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: rng_seed)")
        p.add_argument("--out", default="runs", help="parent directory for run outputs")
        p.add_argument("--episodes", type=int, default=None)
        if name != "train":
            p.add_argument("--checkpoint", help="actor checkpoint for the learned policy")
            p.add_argument("--bins", type=int, default=50)
            p.add_argument("--workers", type=int, default=1)
        if name == "eval":
            p.add_argument("--policy", choices=harness.POLICIES, default="optimal")
            p.add_argument("--channel-trace", action="store_true",
                           help="also export per-slot detector norms of episode 0")
        if name == "sweep":
            p.add_argument("--rates", type=_floats, required=True,
                           help="comma-separated arrival rates in bit/s")
            p.add_argument("--checkpoints", type=lambda s: s.split(","),
                           help="comma-separated checkpoints, one per rate")
        _add_field_flags(p, ScenarioConfig, "scenario overrides")
        _add_field_flags(p, AgentConfig, "agent overrides")
    return parser


def _overrides(args: argparse.Namespace, cls) -> dict[str, Any]:
    prefix = cls.__name__ + "."
    return {k[len(prefix):]: v for k, v in vars(args).items() if k.startswith(prefix) and v is not None}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        scenario, agent = harness.load_config(args.config, _overrides(args, ScenarioConfig),
                                              _overrides(args, AgentConfig))
    except ConfigError as exc:
        print(f"vecnoma: configuration error: {exc}", file=sys.stderr)
        return 2
    seed = scenario.rng_seed if args.seed is None else args.seed
    episodes = args.episodes if args.episodes is not None else (
        agent.episodes if args.command == "train" else agent.eval_episodes)
    try:
        if args.command == "train":
            run_dir = harness.run_train(scenario, agent, seed, args.out, episodes)
        elif args.command == "eval":
            run_dir = harness.run_eval(scenario, agent, args.policy, episodes, seed, args.out,
                                       args.checkpoint, args.bins, args.workers,
                                       args.channel_trace)
        elif args.command == "compare":
            if args.checkpoint is None:
                raise FileNotFoundError("compare needs --checkpoint")
            run_dir = harness.run_compare(scenario, agent, args.checkpoint, episodes, seed,
                                          args.out, args.bins, args.workers)
        else:
            run_dir = harness.export_sweep(scenario, agent, args.rates, episodes, seed, args.out,
                                           checkpoints=args.checkpoints,
                                           shared_checkpoint=args.checkpoint, workers=args.workers)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"vecnoma: {exc}", file=sys.stderr)
        return 2
    print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
