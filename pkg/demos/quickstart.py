"""Quickstart: run the learned caching policy next to two baselines.

Three base stations on a ring serve eight users watching a 360-degree video
split into 6x4 tiles.  Each slot the BSs cache up to ``cache_size`` tiles
per user, learn from the tiles their users actually looked at, and swap
one-bit gradient signs with their neighbors.  The script prints the mean
cache hit and delivery delay of each policy.

    python3 demos/quickstart.py --horizon 300
"""

import argparse

from vrcache.harness import ExperimentConfig, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=300, help="slots to simulate")
    parser.add_argument("--seeds", type=int, default=2, help="number of seeds")
    parser.add_argument("--cache-size", type=float, default=10.0, help="tiles cached per BS")
    args = parser.parse_args()

    cfg = ExperimentConfig(
        seeds=list(range(args.seeds)),
        baselines=["dpfl_algo1", "dpfl_algo2", "fixed_sigma_half", "fedavg"],
        output="",
    )
    cfg.optimizer.horizon = args.horizon
    cfg.network.cache_size = args.cache_size

    result = run_experiment(cfg)
    summary = result.summary()
    key = f"{args.cache_size:g}"

    print(f"{'policy':<18} {'cache hit':>10} {'delay (s)':>10} {'regret':>10}")
    for name in cfg.baselines:
        s = summary[name][key]
        print(
            f"{name:<18} {s['cache_hit']['mean']:>10.3f} "
            f"{s['avg_delay']['mean']:>10.4f} {s['final_regret']['mean']:>10.1f}"
        )
    # dpfl_algo2 steers its cache toward tiles that meet the delay threshold;
    # fedavg shares one cache across all BSs.


if __name__ == "__main__":
    main()
