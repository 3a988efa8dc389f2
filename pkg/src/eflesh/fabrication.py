"""Magnet pouches, magnetometer slot, and the print-pause plan.

Housings and plates are built analytically as closed shells and added to the
lattice's shell soup; the slicer unions overlapping shells, so no mesh boolean
is needed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .clip import ConvexPolyhedron
from .errors import (
    ConfigError,
    MultiplePauseLevels,
    PouchOutsideBody,
    PouchOverlap,
    PouchTooTallForLayer,
    SlotIntersectsPouch,
    SlotOutsideBody,
)
from .lattice import DEFAULT_MIN_BEAM, LatticeModel, Solid
from .mesh import TriMesh

TOL = 1e-6  # mm


@dataclass(frozen=True)
class MagnetSpec:
    diameter: float  # mm
    thickness: float  # mm
    remanence: float = 1.45  # T, N52 datasheet mid-range
    polarity: int = 1  # +1 north up, -1 north down

    def __post_init__(self):
        if self.diameter <= 0 or self.thickness <= 0:
            raise ConfigError(f"magnet dimensions must be positive, got {self.diameter}x{self.thickness}",
                              parameter="magnet")
        if not 0 < self.remanence <= 1.6:
            raise ConfigError(f"remanence {self.remanence} T outside (0, 1.6]", parameter="remanence")
        if self.polarity not in (1, -1):
            raise ConfigError(f"polarity must be +1 or -1, got {self.polarity}", parameter="polarity")

    @property
    def radius(self):
        return self.diameter / 2

    def flipped(self, polarity):
        return replace(self, polarity=int(polarity))

    @classmethod
    def parse(cls, text: str, **kw) -> "MagnetSpec":
        d, t = (float(x) for x in text.lower().split("x"))
        return cls(d, t, **kw)


@dataclass(frozen=True)
class PouchSpec:
    center: tuple  # cavity centroid, mm
    magnet: MagnetSpec
    radial_clearance: float = 0.10
    axial_clearance: float = 0.15
    wall: float = 1.2
    lip: float = 0.4
    segments: int = 64

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radial_clearance < 0 or self.axial_clearance < 0:
            raise ConfigError("clearances must be non-negative", parameter="clearance")
        if self.wall < DEFAULT_MIN_BEAM:
            raise ConfigError(f"wall {self.wall} mm is thinner than the {DEFAULT_MIN_BEAM} mm minimum feature",
                              parameter="wall")
        if not 0 <= self.lip < self.cavity_radius:
            raise ConfigError(f"lip {self.lip} mm must be in [0, cavity radius)", parameter="lip")
        if self.segments < 3:
            raise ConfigError("need at least 3 segments", parameter="segments")

    @property
    def cavity_radius(self):
        return self.magnet.radius + self.radial_clearance

    @property
    def cavity_height(self):
        return self.magnet.thickness + self.axial_clearance

    @property
    def cavity_top(self):
        return self.center[2] + self.cavity_height / 2

    @property
    def cavity_bottom(self):
        return self.center[2] - self.cavity_height / 2

    @property
    def housing_size(self):
        side = self.magnet.diameter + 2 * self.radial_clearance + 2 * self.wall
        height = self.magnet.thickness + 2 * self.axial_clearance + 2 * self.wall
        return np.array([side, side, height])

    @property
    def housing_bounds(self):
        c = np.asarray(self.center)
        half = self.housing_size / 2
        return c - half, c + half

    def with_polarity(self, polarity):
        return replace(self, magnet=self.magnet.flipped(polarity))


@dataclass(frozen=True)
class SlotSpec:
    dims: tuple  # mm
    position: tuple  # slot centre, mm
    open_face: str = "-z"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ConfigError(f"slot dims must be three positive lengths, got {self.dims}", parameter="slot.dims")
        if self.open_face not in _FACES:
            raise ConfigError(f"open_face must be one of {sorted(_FACES)}", parameter="slot.open_face")

    @property
    def bounds(self):
        c, h = np.asarray(self.position), np.asarray(self.dims) / 2
        return c - h, c + h


_FACES = {"+x": (0, 1), "-x": (0, -1), "+y": (1, 1), "-y": (1, -1), "+z": (2, 1), "-z": (2, -1)}


@dataclass
class PrintPlan:
    layer_height: float
    pause_layer_index: int
    pause_z: float
    cavity_top: float
    magnets: list = field(default_factory=list)

    def to_dict(self):
        return {
            "layer_height_mm": self.layer_height,
            "pause_after_layer": self.pause_layer_index,
            "pause_z_mm": round(self.pause_z, 9),
            "first_cover_layer": self.pause_layer_index + 1,
            "max_cavity_top_mm": round(self.cavity_top, 9),
            "magnets": self.magnets,
        }


# ---------------------------------------------------------------- shells


def _square_ring(hx, hy, angles):
    """Points on the rectangle boundary along each ray, plus the corners, by angle."""
    pts = []
    for th in angles:
        c, s = math.cos(th), math.sin(th)
        scale = min(hx / abs(c) if abs(c) > 1e-15 else math.inf, hy / abs(s) if abs(s) > 1e-15 else math.inf)
        pts.append((th, scale * c, scale * s))
    for cx, cy in ((hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)):
        th = math.atan2(cy, cx) % (2 * math.pi)
        if not any(abs(th - p[0]) < 1e-12 for p in pts):
            pts.append((th, cx, cy))
    pts.sort(key=lambda p: p[0])
    return [p[0] for p in pts], np.array([[p[1], p[2]] for p in pts])


def _strip(inner, inner_ang, outer, outer_ang):
    """Triangulate the closed band between two angle-sorted rings (CCW from +z)."""
    tris = []
    n, m = len(inner), len(outer)
    i = j = 0
    two_pi = 2 * math.pi
    while i < n or j < m:
        next_i = inner_ang[(i + 1) % n] + (two_pi if i + 1 >= n else 0) if i < n else math.inf
        next_j = outer_ang[(j + 1) % m] + (two_pi if j + 1 >= m else 0) if j < m else math.inf
        if next_j <= next_i:
            tris.append((inner[i % n], outer[j % m], outer[(j + 1) % m]))
            j += 1
        else:
            tris.append((inner[i % n], outer[j % m], inner[(i + 1) % n]))
            i += 1
    return tris


def housing_shell(pouch: PouchSpec) -> TriMesh:
    """Box with a stepped vertical through-bore: lip opening, cavity, lip opening.

    One closed genus-1 shell. The lip openings (radius cavity_radius - lip)
    are narrower than the magnet, so the magnet is held between the ledge
    below it and the lip printed over it after the pause.
    """
    n = pouch.segments
    cx, cy, cz = pouch.center
    hx, hy, hz = pouch.housing_size / 2
    R = pouch.cavity_radius
    r = R - pouch.lip
    zb, zt = cz - hz, cz + hz
    cb, ct = pouch.cavity_bottom, pouch.cavity_top

    angles = [2 * math.pi * k / n for k in range(n)]
    sq_ang, sq = _square_ring(hx, hy, angles)

    profile = [(r, zb), (r, cb), (R, cb), (R, ct), (r, ct), (r, zt)]
    rings = [profile[0]]
    for p in profile[1:]:
        if abs(p[0] - rings[-1][0]) > 1e-12 or abs(p[1] - rings[-1][1]) > 1e-12:
            rings.append(p)

    verts = []
    ring_idx = []
    for rad, z in rings:
        base = len(verts)
        verts.extend((cx + rad * math.cos(a), cy + rad * math.sin(a), z) for a in angles)
        ring_idx.append(list(range(base, base + n)))
    base = len(verts)
    verts.extend((cx + x, cy + y, zb) for x, y in sq)
    sq_bot = list(range(base, base + len(sq)))
    base = len(verts)
    verts.extend((cx + x, cy + y, zt) for x, y in sq)
    sq_top = list(range(base, base + len(sq)))

    tris = []
    # bore surface, facing the axis
    for lower, upper in zip(ring_idx[:-1], ring_idx[1:]):
        for k in range(n):
            a, b = lower[k], lower[(k + 1) % n]
            c, d = upper[(k + 1) % n], upper[k]
            tris.append((a, d, c))
            tris.append((a, c, b))
    # top annulus (+z) and bottom annulus (-z)
    tris.extend(_strip(ring_idx[-1], angles, sq_top, sq_ang))
    tris.extend((a, c, b) for a, b, c in _strip(ring_idx[0], angles, sq_bot, sq_ang))
    # outer walls
    m = len(sq)
    for k in range(m):
        a, b = sq_bot[k], sq_bot[(k + 1) % m]
        c, d = sq_top[(k + 1) % m], sq_top[k]
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriMesh(np.array(verts), np.array(tris), "pouch")


def _signed_permutation(face):
    """Proper rotation taking local +z to the outward direction of ``face``."""
    axis, sign = _FACES[face]
    others = [a for a in range(3) if a != axis]
    M = np.zeros((3, 3))
    M[others[0], 0] = 1
    M[others[1], 1] = 1
    M[axis, 2] = sign
    if np.linalg.det(M) < 0:
        M[:, 0] *= -1
    return M


def cup_shell(outer_lo, outer_hi, pocket_lo, pocket_hi, open_face: str) -> TriMesh:
    """Closed box with a rectangular pocket open on ``open_face`` (genus 0)."""
    M = _signed_permutation(open_face)
    corners = lambda lo, hi: np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    lo_o = (corners(outer_lo, outer_hi) @ M).min(axis=0)
    hi_o = (corners(outer_lo, outer_hi) @ M).max(axis=0)
    lo_p = (corners(pocket_lo, pocket_hi) @ M).min(axis=0)
    hi_p = (corners(pocket_lo, pocket_hi) @ M).max(axis=0)
    X0, Y0, Z0 = lo_o
    X1, Y1, Z1 = hi_o
    x0, y0, z0 = lo_p
    x1, y1, _ = hi_p
    v = np.array([
        [X0, Y0, Z0], [X1, Y0, Z0], [X1, Y1, Z0], [X0, Y1, Z0],  # 0-3 outer bottom
        [X0, Y0, Z1], [X1, Y0, Z1], [X1, Y1, Z1], [X0, Y1, Z1],  # 4-7 outer top
        [x0, y0, Z1], [x1, y0, Z1], [x1, y1, Z1], [x0, y1, Z1],  # 8-11 pocket rim
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],  # 12-15 pocket floor
    ])
    t = [
        (0, 2, 1), (0, 3, 2),
        (0, 1, 5), (0, 5, 4), (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6), (3, 0, 4), (3, 4, 7),
        # top rim band
        (4, 5, 9), (4, 9, 8), (5, 6, 10), (5, 10, 9), (6, 7, 11), (6, 11, 10), (7, 4, 8), (7, 8, 11),
        # pocket walls, normals into the pocket
        (8, 9, 13), (8, 13, 12), (9, 10, 14), (9, 14, 13), (10, 11, 15), (10, 15, 14), (11, 8, 12), (11, 12, 15),
        # pocket floor faces +z
        (12, 13, 14), (12, 14, 15),
    ]
    return TriMesh(v @ M.T, np.array(t), "slot_plate")


# ---------------------------------------------------------------- placement


def _beam_hits_box(beam, lo, hi):
    normals = np.concatenate([np.eye(3), -np.eye(3)])
    offsets = np.concatenate([hi, -lo])
    return beam.poly.clip_all(normals, offsets) is not None


def _box_gap(a_lo, a_hi, b_lo, b_hi):
    return float(np.max(np.maximum(b_lo - a_hi, a_lo - b_hi)))


def _inside_body(lattice, lo, hi):
    blo, bhi = lattice.bbox
    if np.any(lo < blo - TOL) or np.any(hi > bhi + TOL):
        return False
    if lattice.hull is not None:
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        return bool(lattice.hull.contains(corners, TOL).all())
    return True


def place_pouches(lattice: LatticeModel, pouches: Sequence[PouchSpec]) -> LatticeModel:
    """Carve housing footprints out of the lattice and add housing shells.

    The pouch list is canonicalised (sorted by centre) so the result does not
    depend on input order.
    """
    pouches = sorted(pouches, key=lambda p: (p.center, p.magnet.polarity))
    if not pouches:
        return lattice
    bounds = [p.housing_bounds for p in pouches]
    for i in range(len(pouches)):
        for j in range(i + 1, len(pouches)):
            gap = _box_gap(*bounds[i], *bounds[j])
            need = max(pouches[i].wall, pouches[j].wall)
            if gap < need - 1e-9:
                raise PouchOverlap(
                    f"pouches at {pouches[i].center} and {pouches[j].center} are {gap:.3f} mm apart, "
                    f"need {need} mm",
                    parameter="pouches",
                )
    layer_z = lattice.layer_boundaries()
    for p, (lo, hi) in zip(pouches, bounds):
        if not _inside_body(lattice, lo, hi):
            raise PouchOutsideBody(f"housing of pouch at {p.center} leaves the body", parameter="pouches")
        for z in layer_z:
            if p.cavity_bottom < z - 1e-9 and p.cavity_top > z + 1e-9:
                raise PouchTooTallForLayer(
                    f"cavity of pouch at {p.center} spans z={p.cavity_bottom:.4f}..{p.cavity_top:.4f}, "
                    f"crossing the layer boundary at z={z}",
                    parameter="pouches",
                )
    beams = [b for b in lattice.beams if not any(_beam_hits_box(b, lo, hi) for lo, hi in bounds)]
    solids = list(lattice.solids) + [
        Solid("pouch", f"pouch_{i}", housing_shell(p)) for i, p in enumerate(pouches)
    ]
    return replace(lattice, beams=beams, solids=solids, pouches=list(lattice.pouches) + pouches)


def _box_hits_cavity(lo, hi, pouch: PouchSpec):
    if hi[2] <= pouch.cavity_bottom + TOL or lo[2] >= pouch.cavity_top - TOL:
        return False
    cx, cy = pouch.center[:2]
    dx = max(lo[0] - cx, 0.0, cx - hi[0])
    dy = max(lo[1] - cy, 0.0, cy - hi[1])
    return math.hypot(dx, dy) < pouch.cavity_radius - TOL


def place_slot(lattice: LatticeModel, slot: SlotSpec, wall: float = 1.2) -> LatticeModel:
    """Add a solid plate holding a board channel open on ``slot.open_face``."""
    lo, hi = slot.bounds
    blo, bhi = lattice.bbox
    axis, sign = _FACES[slot.open_face]
    if not _inside_body(lattice, lo, hi):
        raise SlotOutsideBody(f"slot {slot.dims} at {slot.position} leaves the body", parameter="slot")
    face_coord = hi[axis] if sign > 0 else lo[axis]
    body_coord = bhi[axis] if sign > 0 else blo[axis]
    if abs(face_coord - body_coord) > TOL:
        raise SlotOutsideBody(
            f"slot face {slot.open_face} at {face_coord:.4f} is not on the body boundary ({body_coord:.4f})",
            parameter="slot.open_face",
        )
    for p in lattice.pouches:
        if _box_hits_cavity(lo, hi, p):
            raise SlotIntersectsPouch(f"slot overlaps pouch cavity at {p.center}", parameter="slot")
    plate_lo = np.maximum(lo - wall, blo)
    plate_hi = np.minimum(hi + wall, bhi)
    if sign > 0:
        plate_hi[axis] = hi[axis]
    else:
        plate_lo[axis] = lo[axis]
    for ax in range(3):
        if ax == axis:
            inner_gap = (lo[ax] - plate_lo[ax]) if sign > 0 else (plate_hi[ax] - hi[ax])
            if inner_gap <= TOL:
                raise SlotOutsideBody("slot reaches through the body; no room for a channel floor",
                                      parameter="slot.dims")
        elif lo[ax] - plate_lo[ax] <= TOL or plate_hi[ax] - hi[ax] <= TOL:
            raise SlotOutsideBody(f"slot touches the body boundary along axis {'xyz'[ax]}; the channel "
                                  f"must be open on {slot.open_face} only", parameter="slot.position")
    beams = [b for b in lattice.beams if not _beam_hits_box(b, plate_lo, plate_hi)]
    plate = cup_shell(plate_lo, plate_hi, lo, hi, slot.open_face)
    solids = list(lattice.solids) + [Solid("slot", "slot_plate", plate)]
    return replace(lattice, beams=beams, solids=solids, slot=slot)


def default_pouch_centers(lattice: LatticeModel, count: int, z: float | None = None):
    """Centres for ``count`` pouches on a near-square grid in the mid-plane.

    The mid-plane cross-section's bounding rectangle is split into equal
    partitions, one pouch per partition centre; the longer side gets the
    larger count.
    """
    if count <= 0:
        return []
    lo, hi = lattice.bbox
    if z is None:
        z = (lo[2] + hi[2]) / 2
    rect_lo, rect_hi = lo[:2].copy(), hi[:2].copy()
    if lattice.hull is not None:
        poly = ConvexPolyhedron.from_halfspaces(lattice.hull.normals, lattice.hull.offsets)
        slab = poly.clip([0, 0, 1], z + 1e-3) if poly is not None else None
        slab = slab.clip([0, 0, -1], -(z - 1e-3)) if slab is not None else None
        if slab is not None:
            s_lo, s_hi = slab.bounds()
            rect_lo, rect_hi = s_lo[:2], s_hi[:2]
    rows = max(r for r in range(1, int(math.isqrt(count)) + 1) if count % r == 0)
    cols = count // rows
    extent = rect_hi - rect_lo
    nx, ny = (cols, rows) if extent[0] >= extent[1] else (rows, cols)
    xs = rect_lo[0] + (np.arange(nx) + 0.5) * extent[0] / nx
    ys = rect_lo[1] + (np.arange(ny) + 0.5) * extent[1] / ny
    return [(float(x), float(y), float(z)) for y in ys for x in xs]


# ---------------------------------------------------------------- print plan


def layer_index(z: float, layer_height: float) -> int:
    """Number of layers needed to reach height ``z`` (ceil; exact multiples stay put).

    Quotients within 1e-9 of an integer count as exact multiples, absorbing
    binary floating-point error such as 13.8 / 0.2 = 69.00000000000001.
    """
    q = z / layer_height
    k = round(q)
    if abs(q - k) <= 1e-9 * max(1.0, abs(q)):
        return int(k)
    return int(math.ceil(q))


def check_single_level(tops, layer_height: float, parameter="cavity_top"):
    """Return ``tops`` if one pause covers them all, else raise MultiplePauseLevels.

    Tops are grouped greedily from the lowest; a group spans at most one layer height.
    """
    tops = sorted(float(t) for t in tops)
    groups = [[tops[0]]]
    for t in tops[1:]:
        if t - groups[-1][0] > layer_height:
            groups.append([t])
        else:
            groups[-1].append(t)
    if len(groups) > 1:
        levels = [layer_index(max(g), layer_height) for g in groups]
        raise MultiplePauseLevels(
            f"cavity tops span {tops[0]:.4f}..{tops[-1]:.4f} mm; pauses needed after layers {levels}",
            pause_layers=levels,
            parameter=parameter,
        )
    return tops


def pause_layer(pouches: Sequence[PouchSpec], layer_height: float = 0.2) -> PrintPlan:
    if layer_height <= 0:
        raise ConfigError("layer_height must be positive", parameter="layer_height")
    if not pouches:
        raise ConfigError("no pouches to plan a pause for", parameter="pouches")
    top = max(check_single_level([p.cavity_top for p in pouches], layer_height, "pouches"))
    idx = layer_index(top, layer_height)
    magnets = [
        {
            "center_mm": list(p.center),
            "diameter_mm": p.magnet.diameter,
            "thickness_mm": p.magnet.thickness,
            "orientation": "north up" if p.magnet.polarity > 0 else "north down",
        }
        for p in sorted(pouches, key=lambda p: p.center)
    ]
    return PrintPlan(layer_height, idx, idx * layer_height, top, magnets)
