#!/usr/bin/env python3
"""Synthetic slip dataset, 5-fold held-out accuracy of the linear classifier.

Also writes the windows as CSV so ``eflesh slip-train --data`` can be tried
on the same data.
"""

import argparse
import os

import numpy as np

from eflesh.sensormodel import SensorModel
from eflesh.slip import slip_features, synthetic_windows, train_slip_classifier, write_windows_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-class", type=int, default=200)
    ap.add_argument("--window", type=int, default=50)
    ap.add_argument("--noise", type=float, default=2e-6, help="white noise per channel, T")
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-o", "--output", default="out/slip")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    windows, labels = synthetic_windows(SensorModel.default(), args.per_class, rng, args.window, args.noise)
    os.makedirs(args.output, exist_ok=True)
    write_windows_csv(windows, labels, os.path.join(args.output, "windows.csv"))

    X = np.array([slip_features(w).as_array() for w in windows])
    y = np.array(labels)
    folds = np.array_split(rng.permutation(len(y)), args.folds)
    accs = []
    for k, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != k])
        clf = train_slip_classifier(X[train], y[train])
        accs.append(np.mean((clf.probability(X[test]) >= 0.5) == y[test]))
        print(f"fold {k}: held-out accuracy {accs[-1]:.3f}")
    print(f"mean {np.mean(accs):.3f}  min {np.min(accs):.3f}")


if __name__ == "__main__":
    main()
