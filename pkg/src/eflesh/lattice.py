"""Graded edge-beam lattice: unit cells, tiling over a box, trimming to a hull.

The unit cell is a cubic frame of 12 square beams running along the cube
edges, each beam lying inside the cell. Target stiffness is mapped to beam
width with the Gibson-Ashby bending-dominated scaling E/E_f = rho^2, with
relative density rho = 3 (t/c)^2 for an edge-beam frame.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .clip import ConvexPolyhedron
from .errors import BoxTooSmall, EmptyResult, OutOfRange
from .hull import ConvexPolytope
from .mesh import Shell, TriMesh

DEFAULT_MIN_BEAM = 0.4  # mm, one nozzle width


def modulus_to_beam(modulus_ratio: float, cell_size: float, min_beam: float = DEFAULT_MIN_BEAM) -> float:
    """Beam width (mm) giving effective modulus ``modulus_ratio * E_f``.

    >>> round(modulus_to_beam(0.001, 8.0), 3)
    0.821
    """
    if not 0.0 < modulus_ratio < 1.0:
        raise OutOfRange(f"modulus_ratio={modulus_ratio} must lie in (0, 1)", parameter="modulus_ratio")
    if cell_size <= 0:
        raise OutOfRange(f"cell_size={cell_size} must be positive", parameter="cell_size")
    rho = math.sqrt(modulus_ratio)
    width = max(cell_size * math.sqrt(rho / 3.0), min_beam)
    if width >= cell_size / 2:
        raise OutOfRange(
            f"beam width {width:.4g} mm is not below half the {cell_size} mm cell "
            f"(modulus_ratio={modulus_ratio}, min_beam={min_beam})",
            parameter="modulus_ratio",
        )
    return width


@dataclass(frozen=True)
class CellSpec:
    cell_size: float
    modulus_ratio: float
    min_beam: float = DEFAULT_MIN_BEAM

    def __post_init__(self):
        modulus_to_beam(self.modulus_ratio, self.cell_size, self.min_beam)

    @property
    def beam_width(self) -> float:
        return modulus_to_beam(self.modulus_ratio, self.cell_size, self.min_beam)


@dataclass(frozen=True)
class LayerGrading:
    """Modulus ratios per layer of cells, bottom to top."""

    layer_moduli: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_moduli", tuple(float(m) for m in self.layer_moduli))
        if not self.layer_moduli:
            raise OutOfRange("grading needs at least one layer", parameter="grading")
        for m in self.layer_moduli:
            if not 0.0 < m < 1.0:
                raise OutOfRange(f"layer modulus {m} must lie in (0, 1)", parameter="grading")

    def for_layer(self, k: int) -> float:
        return self.layer_moduli[min(k, len(self.layer_moduli) - 1)]

    @classmethod
    def parse(cls, text: str) -> "LayerGrading":
        return cls(tuple(float(x) for x in str(text).split(",") if x.strip()))


def cell_beam_boxes(spec: CellSpec, origin=(0.0, 0.0, 0.0)):
    """(lo, hi) corners of the 12 edge beams of one cell."""
    c, w = spec.cell_size, spec.beam_width
    o = np.asarray(origin, float)
    boxes = []
    for axis in range(3):
        a, b = [ax for ax in range(3) if ax != axis]
        for pa in (0.0, c - w):
            for pb in (0.0, c - w):
                lo = np.zeros(3)
                hi = np.zeros(3)
                lo[axis], hi[axis] = 0.0, c
                lo[a], hi[a] = pa, pa + w
                lo[b], hi[b] = pb, pb + w
                boxes.append((o + lo, o + hi))
    return boxes


def generate_cell(spec: CellSpec, origin=(0.0, 0.0, 0.0)) -> list[Shell]:
    return [Shell(ConvexPolyhedron.box(lo, hi).to_mesh()) for lo, hi in cell_beam_boxes(spec, origin)]


@dataclass
class Beam:
    cell: tuple  # (i, j, k) grid index
    slot: int  # 0..11 within the cell
    poly: ConvexPolyhedron

    def shell(self) -> Shell:
        return Shell(self.poly.to_mesh())

    def volume(self) -> float:
        return self.poly.volume()


@dataclass
class Cell:
    index: tuple
    spec: CellSpec
    occupied: bool = True


@dataclass
class Solid:
    """A closed shell added on top of the lattice (pouch housing, base plate)."""

    kind: str
    name: str
    mesh: TriMesh


@dataclass
class LatticeModel:
    bbox: tuple  # (lo, hi) arrays, mm
    cell_size: float
    grid_dims: tuple
    cells: list
    beams: list
    hull: ConvexPolytope | None = None
    solids: list = field(default_factory=list)
    pouches: list = field(default_factory=list)
    slot: object = None

    @property
    def n_cells(self):
        nx, ny, nz = self.grid_dims
        return nx * ny * nz

    def beam_volume(self) -> float:
        return sum(b.volume() for b in self.beams)

    def shells(self) -> list[Shell]:
        """Emission order: beams by (cell index, slot), then added solids in insertion order."""
        out = [b.shell() for b in sorted(self.beams, key=lambda b: (b.cell, b.slot))]
        out.extend(Shell(s.mesh) for s in self.solids)
        return out

    def layer_boundaries(self):
        z0 = self.bbox[0][2]
        return [z0 + k * self.cell_size for k in range(1, self.grid_dims[2])]


def grid_dims_for(extent, cell_size):
    # tolerate float noise so 40 / 8 is exactly 5 cells
    return tuple(int(math.ceil(e / cell_size - 1e-9)) for e in extent)


def tile_lattice(bbox, cell_size: float, grading: LayerGrading | Sequence[float],
                 min_beam: float = DEFAULT_MIN_BEAM) -> LatticeModel:
    """Fill ``bbox`` with cells anchored at its minimum corner.

    Cells that overhang the box (when an extent is not a multiple of the cell
    size) have their beams clipped to the box.
    """
    if not isinstance(grading, LayerGrading):
        grading = LayerGrading(tuple(grading))
    lo, hi = (np.asarray(x, float) for x in bbox)
    extent = hi - lo
    if np.any(extent < cell_size - 1e-9):
        raise BoxTooSmall(
            f"cell_size={cell_size} mm exceeds bounding box extent {[round(float(e), 6) for e in extent]}",
            parameter="cell_size",
        )
    dims = grid_dims_for(extent, cell_size)
    specs = [CellSpec(cell_size, grading.for_layer(k), min_beam) for k in range(dims[2])]
    box_planes = np.concatenate([np.eye(3), -np.eye(3)]), np.concatenate([hi, -lo])
    cells, beams = [], []
    for i in range(dims[0]):
        for j in range(dims[1]):
            for k in range(dims[2]):
                spec = specs[k]
                origin = lo + cell_size * np.array([i, j, k])
                cells.append(Cell((i, j, k), spec))
                overhang = np.any(origin + cell_size > hi + 1e-9)
                for slot, (blo, bhi) in enumerate(cell_beam_boxes(spec, origin)):
                    poly = ConvexPolyhedron.box(blo, bhi)
                    if overhang:
                        poly = poly.clip_all(*box_planes)
                        if poly is None:
                            continue
                    beams.append(Beam((i, j, k), slot, poly))
    return LatticeModel((lo, hi), cell_size, dims, cells, beams)


def _clip_beam(args):
    beam, normals, offsets = args
    poly = beam.poly.clip_all(normals, offsets)
    return None if poly is None else Beam(beam.cell, beam.slot, poly)


def trim_to_hull(lattice: LatticeModel, hull: ConvexPolytope, workers: int = 1) -> LatticeModel:
    """Clip every beam against every hull half-space; drop beams that vanish.

    Beams are independent, so ``workers > 1`` clips them on a thread pool;
    output order is unchanged either way.
    """
    jobs = [(b, hull.normals, hull.offsets) for b in lattice.beams]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            clipped = list(pool.map(_clip_beam, jobs))
    else:
        clipped = [_clip_beam(j) for j in jobs]
    beams = [b for b in clipped if b is not None]
    if not beams:
        raise EmptyResult("hull and lattice do not overlap", parameter="hull")
    alive = {b.cell for b in beams}
    cells = [replace(c, occupied=c.index in alive) for c in lattice.cells]
    return replace(lattice, beams=beams, cells=cells, hull=hull)
