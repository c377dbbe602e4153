"""Figure-ready CSVs from a trained actor: per-distance curves for all policies and an arrival-rate sweep.

    python scripts/figure_data.py runs/train_seed0_xxx/actor.ckpt --out figdata
"""

import argparse

from vecnoma import harness
from vecnoma.ddpg import AgentConfig
from vecnoma.scenario import ScenarioConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--out", default="figdata")
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rates", type=float, nargs="+", default=[1e6, 2e6, 3e6, 4e6, 5e6])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    scenario, agent = ScenarioConfig(), AgentConfig()
    # binned_<policy>.csv hold power, buffer and reward against distance
    print(harness.run_compare(scenario, agent, args.checkpoint, args.episodes, args.seed, args.out,
                              workers=args.workers))
    print(harness.export_sweep(scenario, agent, args.rates, args.episodes, args.seed, args.out,
                               shared_checkpoint=args.checkpoint, workers=args.workers))


if __name__ == "__main__":
    main()
