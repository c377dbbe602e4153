"""Desk-scale training: 300 episodes on lane 2 for several seeds, then a three-policy comparison.

Runs are cached by (config, seed, code) so the acceptance suite can reuse them.

    python scripts/desk_scale.py --seeds 0 1 2 3 4 --cache .acceptance_cache
"""

import argparse
import json
import logging

from vecnoma import harness
from vecnoma.ddpg import AgentConfig
from vecnoma.scenario import ScenarioConfig

DESK_EPISODES = 300


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--cache", default=".acceptance_cache")
    ap.add_argument("--episodes", type=int, default=DESK_EPISODES)
    ap.add_argument("--eval-episodes", type=int, default=0,
                    help="also compare against the baselines over this many episodes")
    ap.add_argument("--fresh", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    scenario = ScenarioConfig(target_lane=2)
    agent = AgentConfig(episodes=args.episodes)
    for seed in args.seeds:
        run_dir = harness.cached_train(scenario, agent, seed, args.cache, fresh=args.fresh)
        print(f"seed {seed}: {run_dir}", flush=True)
        if args.eval_episodes:
            res = harness.compare_policies(scenario, run_dir / "actor.ckpt", args.eval_episodes, seed)
            print(json.dumps({k: v.as_dict() for k, v in res.items()}, indent=1), flush=True)


if __name__ == "__main__":
    main()
