#!/usr/bin/env python3
"""Monte-Carlo localization error of the model-based solver versus noise level.

Contacts are drawn uniformly over +-15 mm and 0.5-4 mm depth. Two noise
models are run: multiplicative (each channel scaled by 1 + s N(0, 1)) and
additive (sigma = s times the signal norm on every channel).
"""

import argparse
import math

import numpy as np

from eflesh.sensormodel import ContactState, SensorModel, forward_signal, localize_contact


def trial(model, rng, level, kind):
    c = ContactState(rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(0.5, 4.0))
    s = forward_signal(c, model).values
    if kind == "multiplicative":
        s = s * (1 + level * rng.normal(size=s.size))
    else:
        s = s + level * np.linalg.norm(s) * rng.normal(size=s.size)
    est = localize_contact(s, model).contact.theta
    return est - c.theta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--levels", type=float, nargs="+", default=[0.0, 0.001, 0.005, 0.01, 0.02])
    ap.add_argument("--polarity", choices=["aligned", "alternating"], default="aligned")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = SensorModel.default(args.polarity)
    print(f"{'noise':>12} {'level':>7} {'xy RMSE mm':>11} {'z RMSE mm':>10}")
    for kind in ("multiplicative", "additive"):
        for level in args.levels:
            rng = np.random.default_rng([args.seed, int(level * 1e6)])
            err = np.array([trial(model, rng, level, kind) for _ in range(args.trials)])
            xy = math.sqrt(np.mean(np.sum(err[:, :2] ** 2, axis=1)))
            z = math.sqrt(np.mean(err[:, 2] ** 2))
            print(f"{kind:>12} {level:7.3f} {xy:11.4f} {z:10.4f}")


if __name__ == "__main__":
    main()
