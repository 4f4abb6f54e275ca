"""Cache-size sweep: how hit ratio and delay grow with the cache budget.

Runs every policy on the same traces for several per-BS cache budgets and
prints one row per (policy, budget).  A larger budget always helps; the
interesting part is the gap between learned weights and frozen weights.

    python3 demos/cache_sweep.py --budgets 10 15 20 25
"""

import argparse

import numpy as np

from vrcache.harness import ALL_BASELINES, ExperimentConfig, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--budgets", type=float, nargs="+", default=[10.0, 15.0, 20.0, 25.0])
    parser.add_argument("--horizon", type=int, default=300)
    parser.add_argument("--seeds", type=int, default=2)
    parser.add_argument("--threads", type=int, default=4)
    args = parser.parse_args()

    cfg = ExperimentConfig(seeds=list(range(args.seeds)), output="", threads=args.threads)
    cfg.optimizer.horizon = args.horizon
    result = run_experiment(cfg, budgets=args.budgets)

    header = "policy".ljust(18) + "".join(f"{b:>9g}" for b in args.budgets)
    print("mean cache hit per slot and BS")
    print(header)
    for name in ALL_BASELINES:
        hits = result.runs[name].per_seed("cache_hit").mean(axis=0)
        print(name.ljust(18) + "".join(f"{h:>9.2f}" for h in hits))

    print("\nmean delivery delay (s)")
    print(header)
    for name in ALL_BASELINES:
        delay = np.nanmean(result.runs[name].per_seed("avg_delay"), axis=0)
        print(name.ljust(18) + "".join(f"{d:>9.4f}" for d in delay))


if __name__ == "__main__":
    main()
