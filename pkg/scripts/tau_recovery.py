"""Fit a single temperature on overconfident synthetic data and report how well it recovers c.

    python3 scripts/tau_recovery.py --c 1.0 2.5 4.0 --seeds 3
"""

import argparse

import numpy as np

from caring import FitConfig, SynthSpec, fit_temperature, gen_global, reliability_report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--c", type=float, nargs="+", default=[1.0, 2.5, 4.0])
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--m", type=int, default=10)
    parser.add_argument("--seeds", type=int, default=3)
    args = parser.parse_args()

    print(f"{'c':>5} {'seed':>4} {'tau':>7} {'raw ECE':>8} {'cal ECE':>8}")
    for c in args.c:
        taus = []
        for seed in range(args.seeds):
            fit = gen_global(SynthSpec(args.n, args.m, c, seed=2 * seed))
            test = gen_global(SynthSpec(args.n, args.m, c, seed=2 * seed + 1))
            scaler, _ = fit_temperature(fit, FitConfig.temperature(seed=seed))
            raw = reliability_report(test).ece
            cal = reliability_report(test, scaler.temperatures(test)).ece
            taus.append(scaler.tau)
            print(f"{c:5.2f} {seed:4d} {scaler.tau:7.4f} {raw:8.4f} {cal:8.4f}")
        print(f"{c:5.2f} mean tau {np.mean(taus):.4f}")


if __name__ == "__main__":
    main()
