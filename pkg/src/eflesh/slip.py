"""Windowed slip features and a logistic force / no-force classifier."""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import SingleClassDataset, WindowTooShort
from .sensormodel import (
    N_MAGNETOMETERS,
    SIGNAL_COLUMNS,
    SensorModel,
    SignalFrame,
    _signal,
    rest_field,
)

LABELS = ("no-force", "force")
DEFAULT_WINDOW = 50  # frames, 0.5 s at 100 Hz
# The statistics span decades (a light tug and a hard one differ ~100x), so the
# classifier works on log(feature + floor). 1 nT is below any magnetometer noise.
LOG_FLOOR = 1e-9


@dataclass
class SlipFeatureVector:
    xy_norms: np.ndarray  # (5,)
    max_change: float
    std: float

    def as_array(self):
        return np.concatenate([self.xy_norms, [self.max_change, self.std]])


def _as_array(window):
    if len(window) and isinstance(window[0], SignalFrame):
        arr = np.array([f.values for f in window])
    else:
        arr = np.asarray(window, float)
    return arr.reshape(len(arr), -1)


def slip_features(window) -> SlipFeatureVector:
    """Features of a window of raw 15-D frames.

    xy_norms: per-magnetometer mean of sqrt(Bx^2 + By^2).
    max_change: largest (max - min) over the 15 channels.
    std: standard deviation over the window of |frame - first frame|.
    """
    s = _as_array(window)
    if len(s) < 2:
        raise WindowTooShort(f"window has {len(s)} frame(s); need at least 2", parameter="window")
    if s.shape[1] != 3 * N_MAGNETOMETERS:
        raise ValueError(f"frames must have {3 * N_MAGNETOMETERS} values, got {s.shape[1]}")
    per = s.reshape(len(s), N_MAGNETOMETERS, 3)
    xy = np.hypot(per[..., 0], per[..., 1]).mean(axis=0)
    max_change = float((s.max(axis=0) - s.min(axis=0)).max())
    drift = np.linalg.norm(s - s[0], axis=1)
    return SlipFeatureVector(xy, max_change, float(drift.std()))


@dataclass
class SlipClassifier:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    def probability(self, features):
        X = _log_features(np.atleast_2d(_features_matrix(features)))
        z = ((X - self.mean) / self.scale) @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-z))

    def classify(self, features):
        p = self.probability(features)
        out = [LABELS[int(v >= 0.5)] for v in p]
        return out[0] if np.ndim(_features_matrix(features)) == 1 else out

    def to_dict(self):
        return {"weights": self.weights.tolist(), "bias": self.bias, "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "labels": list(LABELS), "log_floor": LOG_FLOOR}


def _features_matrix(features):
    if isinstance(features, SlipFeatureVector):
        return features.as_array()
    if len(features) and isinstance(features[0], SlipFeatureVector):
        return np.array([f.as_array() for f in features])
    return np.asarray(features, float)


def _log_features(X):
    if np.any(X < 0):
        raise ValueError("slip features must be non-negative")
    return np.log(X + LOG_FLOOR)


def train_slip_classifier(features, labels, lr: float = 0.1, epochs: int = 500) -> SlipClassifier:
    """Full-batch gradient descent on the logistic loss over standardised log-features.

    ``labels`` are 0/1 or the strings in LABELS.
    """
    X = np.atleast_2d(_features_matrix(features))
    y = np.array([LABELS.index(v) if isinstance(v, str) else int(v) for v in labels], dtype=float)
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data contains only one class", parameter="labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    X = _log_features(X)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    w = np.zeros(Z.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(epochs):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        err = p - y
        w -= lr * (Z.T @ err) / n
        b -= lr * err.sum() / n
    return SlipClassifier(w, float(b), mean, scale)


# ---------------------------------------------------------------- synthetic data


def synthetic_windows(model: SensorModel, n_per_class: int, rng, window: int = DEFAULT_WINDOW,
                      noise: float = 2e-6, dt: float = 0.01):
    """Raw-signal windows for a held contact (no-force) or a tugged one (force).

    A tug drags the contact point 1-3 mm sideways with a linear ramp over the
    window. Noise is white Gaussian on every channel, in tesla.
    """
    base = rest_field(model)
    hx, hy = model.footprint
    windows, labels = [], []
    for label in (0, 1):
        for _ in range(n_per_class):
            x0, y0 = rng.uniform(-0.5 * hx, 0.5 * hx), rng.uniform(-0.5 * hy, 0.5 * hy)
            z = rng.uniform(1.0, 3.0)
            if label:
                ang = rng.uniform(0, 2 * np.pi)
                dist = rng.uniform(1.0, 3.0)
                ramp = np.linspace(0.0, 1.0, window)
                path = [(x0 + dist * r * np.cos(ang), y0 + dist * r * np.sin(ang)) for r in ramp]
            else:
                path = [(x0, y0)] * window
            frames = []
            cache = {}
            for k, (x, y) in enumerate(path):
                key = (x, y)
                if key not in cache:
                    cache[key] = _signal(np.array([x, y, z]), model)
                vals = base + cache[key] + noise * rng.normal(size=3 * N_MAGNETOMETERS)
                frames.append(SignalFrame(vals, k * dt))
            windows.append(frames)
            labels.append(label)
    return windows, labels


def read_windows_csv(path):
    """Windows from CSV with columns window,label,t,m0x..m4z (label force|no-force|0|1)."""
    grouped = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            wid = row["window"]
            lab = row["label"]
            lab = LABELS.index(lab) if lab in LABELS else int(lab)
            frames, prev = grouped.setdefault(wid, ([], lab))
            if prev != lab:
                raise ValueError(f"window {wid} has mixed labels")
            frames.append(SignalFrame([float(row[c]) for c in SIGNAL_COLUMNS[1:]], float(row["t"])))
    return [v[0] for v in grouped.values()], [v[1] for v in grouped.values()]


def write_windows_csv(windows, labels, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "label"] + SIGNAL_COLUMNS)
        for i, (frames, lab) in enumerate(zip(windows, labels)):
            for f in frames:
                w.writerow([i, LABELS[lab]] + [repr(float(f.timestamp))] + [repr(float(v)) for v in f.values])
