"""Sign versus full-precision gradient exchange.

Runs the same network twice: once sharing one bit per gradient entry with
neighbors, once sharing 32-bit floats.  It fits a power law to the
running-mean loss of each and reports the slopes and the bits sent.  The
slopes should be close while the sign exchange sends 32x fewer bits.

    python3 demos/sign_vs_full.py --horizon 2000
"""

import argparse

from vrcache.harness import ExperimentConfig, convergence_report, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = ExperimentConfig(seeds=[args.seed], baselines=["dpfl_algo1", "sgd_algo1"], output="")
    cfg.optimizer.horizon = args.horizon
    runs = run_experiment(cfg).runs
    sign, full = runs["dpfl_algo1"], runs["sgd_algo1"]

    # loss = cumulative regret / t, averaged over BSs
    rep = convergence_report(sign.loss[0, 0].mean(axis=-1), full.loss[0, 0].mean(axis=-1))
    print(f"loss slope, sign exchange : {rep['slope_sign']:+.3f}")
    print(f"loss slope, full exchange : {rep['slope_full']:+.3f}")
    print(f"slope difference          : {rep['slope_diff']:+.3f}")

    bits_sign = sign.grad_bits.sum()
    bits_full = full.grad_bits.sum()
    print(f"bits sent                 : {bits_sign:.3g} vs {bits_full:.3g} (ratio {bits_full / bits_sign:g})")


if __name__ == "__main__":
    main()
