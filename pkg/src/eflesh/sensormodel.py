"""Contact -> magnetometer forward model, its Jacobian, and model-based inversion.

Sensor frame: x, y in mm from the sensor centre, z in mm up from the sensor
bottom. A contact (x, y) pressed in by depth z pushes magnet i straight down
by ``z * exp(-|p_i - (x, y)|^2 / (2 l^2))``. The signal is the change in
flux density at the five magnetometers, flattened magnetometer-major
(m0x, m0y, m0z, m1x, ...).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, MagnetBelowBoard, Undetectable
from .fabrication import MagnetSpec
from .magnetics import MagnetSource, assign_polarities, dipole_fields, dipole_gradients

MM = 1e-3
N_MAGNETOMETERS = 5
SIGNAL_COLUMNS = ["t"] + [f"m{i}{a}" for i in range(N_MAGNETOMETERS) for a in "xyz"]


@dataclass(frozen=True)
class MagnetometerLayout:
    positions: tuple  # five (x, y) points on the board plane, m
    board_z: float  # m

    def __post_init__(self):
        pos = tuple(tuple(float(v) for v in p[:2]) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) != N_MAGNETOMETERS:
            raise ValueError(f"layout needs exactly {N_MAGNETOMETERS} magnetometers, got {len(pos)}")
        if len(set(pos)) != len(pos):
            raise ValueError("magnetometer positions must be distinct")

    @property
    def points(self):
        p = np.array(self.positions)
        return np.column_stack([p, np.full(len(p), self.board_z)])

    @classmethod
    def default(cls, board_z_mm=1.0, offset_mm=7.0):
        o = offset_mm * MM
        return cls(((0.0, 0.0), (-o, -o), (o, -o), (-o, o), (o, o)), board_z_mm * MM)


@dataclass
class SignalFrame:
    values: np.ndarray  # (15,), T
    timestamp: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float).reshape(3 * N_MAGNETOMETERS)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal values must be finite")

    def per_magnetometer(self):
        return self.values.reshape(N_MAGNETOMETERS, 3)


@dataclass(frozen=True)
class ContactState:
    x: float  # mm
    y: float  # mm
    z: float  # mm, indentation depth
    influence_length: float = 8.0  # mm

    def __post_init__(self):
        if self.z < 0:
            raise ValueError(f"indentation depth must be non-negative, got {self.z}")

    @property
    def theta(self):
        return np.array([self.x, self.y, self.z])


@dataclass
class SensorModel:
    magnets: list  # MagnetSource at rest, SI
    layout: MagnetometerLayout
    influence_length: float = 8.0  # mm
    footprint: tuple = (20.0, 20.0)  # half-widths, mm
    max_indent: float = 4.2  # mm

    @classmethod
    def default(cls, polarity="aligned", magnet=None, pitch_mm=20.0, plane_z_mm=12.0, n_slices=8, **kw):
        magnet = magnet or MagnetSpec(9.525, 3.175)
        h = pitch_mm / 2
        centers = [(-h, -h), (h, -h), (-h, h), (h, h)]
        signs = assign_polarities(centers, polarity)
        mags = [
            MagnetSource(magnet.flipped(s), (x * MM, y * MM, plane_z_mm * MM), n_slices=n_slices)
            for (x, y), s in zip(centers, signs)
        ]
        return cls(mags, MagnetometerLayout.default(), **kw)

    @property
    def rest_xy(self):
        return np.array([m.center[:2] for m in self.magnets]) / MM

    def check_contact(self, contact: ContactState):
        hx, hy = self.footprint
        if abs(contact.x) > hx + 1e-9 or abs(contact.y) > hy + 1e-9:
            raise ConfigError(f"contact ({contact.x}, {contact.y}) outside the +-{hx}x{hy} mm footprint",
                              parameter="contact.xy")
        if contact.z > self.max_indent + 1e-9:
            raise ConfigError(f"indentation {contact.z} mm exceeds max {self.max_indent} mm", parameter="contact.z")

    # -- serialisation (millimetres on disk)
    def to_dict(self):
        m0 = self.magnets[0].spec
        return {
            "version": 1,
            "magnet": {"diameter_mm": m0.diameter, "thickness_mm": m0.thickness, "remanence_T": m0.remanence},
            "magnets": [{"center_mm": [c / MM for c in m.center], "polarity": m.spec.polarity} for m in self.magnets],
            "n_slices": self.magnets[0].n_slices,
            "magnetometers_mm": [[c / MM for c in p] for p in self.layout.positions],
            "board_z_mm": self.layout.board_z / MM,
            "influence_length_mm": self.influence_length,
            "footprint_half_mm": list(self.footprint),
            "max_indent_mm": self.max_indent,
        }

    @classmethod
    def from_dict(cls, d):
        mg = d["magnet"]
        spec = MagnetSpec(mg["diameter_mm"], mg["thickness_mm"], mg.get("remanence_T", 1.45))
        n = d.get("n_slices", 8)
        mags = [MagnetSource(spec.flipped(m.get("polarity", 1)), tuple(c * MM for c in m["center_mm"]), n_slices=n)
                for m in d["magnets"]]
        layout = MagnetometerLayout(tuple(tuple(c * MM for c in p) for p in d["magnetometers_mm"]),
                                    d["board_z_mm"] * MM)
        return cls(mags, layout, d.get("influence_length_mm", 8.0), tuple(d.get("footprint_half_mm", (20.0, 20.0))),
                   d.get("max_indent_mm", 4.2))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------- forward


def displacements(theta, model: SensorModel, ell=None):
    """Downward magnet displacements w (mm) and the Gaussian weights."""
    x, y, z = theta
    ell = model.influence_length if ell is None else ell
    d2 = ((model.rest_xy - [x, y]) ** 2).sum(axis=1)
    if ell <= 0:
        # zero-length limit: only a magnet directly under the contact moves
        g = (d2 <= 1e-18).astype(float)
    else:
        g = np.exp(-d2 / (2 * ell * ell))
    return z * g, g


def _displaced(model, w):
    out = []
    for m, wi in zip(model.magnets, w):
        c = np.array(m.center)
        c[2] -= wi * MM
        bottom = c[2] - m.length / 2
        if bottom <= model.layout.board_z:
            raise MagnetBelowBoard(
                f"magnet at {tuple(np.round(np.array(m.center) / MM, 3))} mm would be pushed "
                f"{wi:.3f} mm down, through the board plane", parameter="z")
        out.append(c)
    return out


def _signal(theta, model, ell=None):
    w, _ = displacements(theta, model, ell)
    sensors = model.layout.points
    delta = np.zeros((N_MAGNETOMETERS, 3))
    for m, c, wi in zip(model.magnets, _displaced(model, w), w):
        if wi == 0.0:
            continue
        pos_new, mom = m.dipoles(c)
        pos_old, _ = m.dipoles()
        delta += dipole_fields(sensors, pos_new, mom) - dipole_fields(sensors, pos_old, mom)
    return delta.reshape(-1)


def forward_signal(contact: ContactState, model: SensorModel, timestamp=0.0) -> SignalFrame:
    """Change in flux density at the magnetometers caused by ``contact``."""
    model.check_contact(contact)
    return SignalFrame(_signal(contact.theta, model, contact.influence_length), timestamp)


def rest_field(model: SensorModel) -> np.ndarray:
    """Absolute (15,) field at the magnetometers with no contact."""
    sensors = model.layout.points
    total = np.zeros((N_MAGNETOMETERS, 3))
    for m in model.magnets:
        pos, mom = m.dipoles()
        total += dipole_fields(sensors, pos, mom)
    return total.reshape(-1)


def _jacobian(theta, model, ell=None):
    ell = model.influence_length if ell is None else ell
    x, y, z = theta
    w, g = displacements(theta, model, ell)
    sensors = model.layout.points
    J = np.zeros((N_MAGNETOMETERS * 3, 3))
    rest = model.rest_xy
    for m, c, wi, gi, (px, py) in zip(model.magnets, _displaced(model, w), w, g, rest):
        if gi == 0.0:
            continue
        pos, mom = m.dipoles(c)
        # moving the magnet down by dw shifts r = sensor - source up by dw
        dB_dw = dipole_gradients(sensors, pos, mom)[:, :, 2].reshape(-1) * MM
        dw = np.array([wi * (px - x) / ell**2, wi * (py - y) / ell**2, gi]) if ell > 0 else np.array([0, 0, gi])
        J += np.outer(dB_dw, dw)
    return J


def jacobian(contact: ContactState, model: SensorModel) -> np.ndarray:
    """(15, 3) derivative of the signal with respect to (x, y, z) in T/mm."""
    model.check_contact(contact)
    return _jacobian(contact.theta, model, contact.influence_length)


# ---------------------------------------------------------------- inverse


@dataclass
class LocalizationResult:
    contact: ContactState
    residual: float  # T, Euclidean norm
    converged: bool
    clamped: bool
    iterations: int


def _project(theta, model):
    hx, hy = model.footprint
    return np.array([np.clip(theta[0], -hx, hx), np.clip(theta[1], -hy, hy), np.clip(theta[2], 0.0, model.max_indent)])


def _lm(target, theta, model, max_iter, step_tol):
    theta = _project(np.asarray(theta, float), model)
    r = _signal(theta, model) - target
    cost = r @ r
    lam = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged = True
            break
        J = _jacobian(theta, model)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        if lam is None:
            lam = 1e-3
        while True:
            try:
                step = -np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            cand = _project(theta + step, model)
            r_new = _signal(cand, model) - target
            cost_new = r_new @ r_new
            moved = np.abs(cand - theta).max()
            if cost_new < cost:
                theta, r, cost = cand, r_new, cost_new
                lam = max(lam / 3, 1e-12)
                break
            lam *= 4
            if moved < step_tol or lam > 1e16:
                break
        if moved < step_tol:
            converged = True
            break
    return theta, float(math.sqrt(cost)), converged, it


def _start_points(model, guess):
    hx, hy = model.footprint
    pts = [np.asarray(guess, float)]
    for fx in (-0.5, 0.0, 0.5):
        for fy in (-0.5, 0.0, 0.5):
            pts.append(np.array([fx * hx, fy * hy, 0.5 * model.max_indent]))
    return pts


def localize_contact(signal, model: SensorModel, initial_guess=(0.0, 0.0, 1.0), max_iter: int = 200,
                     step_tol: float = 1e-9, multi_start: bool = True) -> LocalizationResult:
    """Levenberg-Marquardt fit of (x, y, z) to a 15-D signal change.

    The search stays inside the footprint and 0 <= z <= max_indent. If the
    first fit leaves a residual above 5 % of the signal norm, a 3x3 grid of
    extra starts is tried and the best fit kept.
    """
    target = np.asarray(signal.values if isinstance(signal, SignalFrame) else signal, float)
    best = _lm(target, initial_guess, model, max_iter, step_tol)
    norm = float(np.linalg.norm(target))
    if multi_start and norm > 0 and best[1] > 0.05 * norm:
        for start in _start_points(model, initial_guess)[1:]:
            cand = _lm(target, start, model, max_iter, step_tol)
            if cand[1] < best[1]:
                best = cand
    theta, res, converged, it = best
    hx, hy = model.footprint
    clamped = bool(abs(theta[0]) >= hx - 1e-9 or abs(theta[1]) >= hy - 1e-9) and res > 1e-12
    contact = ContactState(float(theta[0]), float(theta[1]), float(max(theta[2], 0.0)), model.influence_length)
    return LocalizationResult(contact, res, converged, clamped, it)


# ---------------------------------------------------------------- sensitivity


def threshold_depth(model: SensorModel, sigma_noise: float, x=0.0, y=0.0, tol=1e-4) -> float:
    """Smallest indentation (mm) whose signal norm reaches 6 sigma."""
    if sigma_noise < 0:
        raise ValueError("sigma_noise must be non-negative")
    target = 6.0 * sigma_noise
    if target == 0.0:
        return 0.0
    norm = lambda z: float(np.linalg.norm(_signal(np.array([x, y, z]), model)))
    hi = model.max_indent
    if norm(hi) < target:
        raise Undetectable(
            f"6 sigma = {target:.3e} T exceeds the {norm(hi):.3e} T signal at full {hi} mm indentation",
            parameter="sigma_noise",
        )
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if norm(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def sensitivity(model: SensorModel, sigma_noise: float, stiffness: float) -> float:
    """Minimum detectable force (N) given noise sigma (T) and stiffness (N/mm)."""
    if stiffness <= 0:
        raise ValueError("stiffness must be positive")
    return stiffness * threshold_depth(model, sigma_noise)


# ---------------------------------------------------------------- signal CSV


def read_signal_csv(path) -> list[SignalFrame]:
    frames = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SIGNAL_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            frames.append(SignalFrame([float(row[c]) for c in SIGNAL_COLUMNS[1:]], float(row["t"])))
    return frames


def write_signal_csv(frames: Sequence[SignalFrame], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SIGNAL_COLUMNS)
        for f in frames:
            w.writerow([repr(float(f.timestamp))] + [repr(float(v)) for v in f.values])
