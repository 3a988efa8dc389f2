"""End-to-end build: mesh -> hull -> lattice -> trim -> pouches -> slot -> pause plan -> field report."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import magnetics
from .clip import ConvexPolyhedron
from .config import PipelineConfig, layout_to_dict
from .errors import EFleshError, FabricationError, GeometryError, SimulationError
from .fabrication import SlotSpec, default_pouch_centers, pause_layer, place_pouches, place_slot
from .hull import convex_hull
from .lattice import LayerGrading, tile_lattice, trim_to_hull
from .mesh import emit_mesh, parse_mesh, validate_shell

log = logging.getLogger(__name__)

STAGES = ["load", "hull", "lattice", "trim", "pouches", "slot", "pause", "polarity", "field", "emit"]
_FAMILY = {
    "hull": GeometryError, "lattice": GeometryError, "trim": GeometryError,
    "pouches": FabricationError, "slot": FabricationError, "pause": FabricationError,
    "polarity": SimulationError, "field": SimulationError,
}


@dataclass
class PipelineResult:
    output_dir: str | None
    model: object
    print_plan: object
    field_report: dict
    timings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def stage_plan(cfg: PipelineConfig):
    return [s for s in STAGES if not (s == "slot" and cfg.slot is None)]


def _slot_spec(cfg, bbox):
    s = cfg.slot
    face = s.get("open_face", "-z")
    dims = np.asarray(s["dims"], float)
    pos = s.get("position")
    if pos is None:
        lo, hi = bbox
        pos = (lo + hi) / 2
        axis = "xyz".index(face[1])
        pos[axis] = hi[axis] - dims[axis] / 2 if face[0] == "+" else lo[axis] + dims[axis] / 2
    return SlotSpec(tuple(dims), tuple(pos), face)


def field_report(pouches, plane_offset_mm, extent_mm, resolution, center_mm, n_slices=8):
    """Aligned vs alternating |B_z| on a plane ``plane_offset_mm`` above the magnet centres."""
    centers = [p.center for p in sorted(pouches, key=lambda p: p.center)]
    plane_z = (float(np.mean([c[2] for c in centers])) + plane_offset_mm) * 1e-3
    maps = {}
    for mode in ("aligned", "alternating"):
        signs = magnetics.assign_polarities(centers, mode)
        srcs = magnetics.sources_from_pouches(
            [p.with_polarity(s) for p, s in zip(sorted(pouches, key=lambda p: p.center), signs)], n_slices)
        maps[mode] = magnetics.field_map(srcs, plane_z, tuple(e * 1e-3 for e in extent_mm), tuple(resolution),
                                         tuple(c * 1e-3 for c in center_mm))
    out = {
        "plane_height_above_magnets_mm": plane_offset_mm,
        "plane_z_mm": round(plane_z * 1e3, 9),
        "extent_mm": list(extent_mm),
        "resolution": list(resolution),
        "alternating_polarities": magnetics.assign_polarities(centers, "alternating"),
    }
    for metric in ("max", "mean"):
        out[metric] = magnetics.stray_field_report(maps["aligned"], maps["alternating"], metric).to_dict()
    return out


def run_pipeline(cfg: PipelineConfig, output_dir: str | None = None, keep_intermediates=False,
                 write=True) -> PipelineResult:
    cfg.validate()
    out = output_dir or cfg.output_dir
    timings = []
    inter_dir = os.path.join(out, "intermediates")
    if write:
        os.makedirs(out, exist_ok=True)
        if keep_intermediates:
            os.makedirs(inter_dir, exist_ok=True)

    def dump(name, shells):
        if write and keep_intermediates:
            emit_mesh(shells, os.path.join(inter_dir, name))

    state = {}

    def run(stage, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except EFleshError as exc:
            exc.stage = exc.stage or stage
            raise
        except ValueError as exc:
            raise _FAMILY.get(stage, EFleshError)(str(exc), stage=stage) from exc
        dt = time.perf_counter() - t0
        timings.append((stage, dt))
        log.info("stage %-8s ok  %.3f s", stage, dt)
        return result

    mesh = run("load", lambda: parse_mesh(cfg.input, unit_scale=cfg.unit_scale))
    bbox = mesh.bbox

    def hull_stage():
        hull = convex_hull(mesh)
        vol = mesh.signed_volume()
        if vol > 0 and hull.volume > 1.05 * vol:
            log.warning("input is not convex: hull volume %.1f mm^3 exceeds mesh volume %.1f mm^3 by >5%%; "
                        "concavities will be filled", hull.volume, vol)
        return hull

    hull = run("hull", hull_stage)
    dump("01_hull.stl", ConvexPolyhedron.from_halfspaces(hull.normals, hull.offsets).to_mesh())
    grading = LayerGrading(tuple(cfg.grading))
    lattice = run("lattice", lambda: tile_lattice(bbox, cfg.cell_size, grading, cfg.min_beam))
    state["cells_before_carving"] = lattice.n_cells
    dump("02_lattice.stl", lattice.shells())
    lattice = run("trim", lambda: trim_to_hull(lattice, hull, cfg.workers))
    dump("03_trimmed.stl", lattice.shells())

    def pouch_stage():
        centers = cfg.pouch_centers
        if centers is None:
            centers = default_pouch_centers(lattice, cfg.magnet_count)
        signs = magnetics.assign_polarities(centers, cfg.polarity) if centers else []
        pouches = [cfg.pouch(c, s) for c, s in zip(centers, signs)]
        return pouches, place_pouches(lattice, pouches)

    pouches, lattice = run("pouches", pouch_stage)
    dump("04_pouches.stl", lattice.shells())
    slot = None
    if cfg.slot is not None:
        slot = _slot_spec(cfg, bbox)
        lattice = run("slot", lambda: place_slot(lattice, slot, cfg.wall))
        dump("05_slot.stl", lattice.shells())
    plan = run("pause", lambda: pause_layer(pouches, cfg.layer_height)) if pouches else None
    polarities = run("polarity", lambda: [p.magnet.polarity for p in sorted(pouches, key=lambda p: p.center)])

    def field_stage():
        if not pouches:
            return {}
        lo, hi = bbox
        extent = cfg.field_extent_mm or [float(hi[0] - lo[0]), float(hi[1] - lo[1])]
        center = [float((lo[0] + hi[0]) / 2), float((lo[1] + hi[1]) / 2)]
        rep = field_report(pouches, cfg.field_plane_mm, extent, cfg.field_resolution, center, cfg.n_slices)
        rep["build_polarity"] = cfg.polarity
        rep["build_polarities"] = polarities
        return rep

    report = run("field", field_stage)
    shells = lattice.shells()
    summary = {
        "cells_before_carving": state["cells_before_carving"],
        "grid_dims": list(lattice.grid_dims),
        "beams": len(lattice.beams),
        "solids": len(lattice.solids),
        "shells": len(shells),
    }

    def emit_stage():
        if not write:
            return
        emit_mesh(shells, os.path.join(out, "model.stl"))
        plan_doc = {"summary": summary, "print_plan": plan.to_dict() if plan else None,
                    "layout": layout_to_dict(pouches, slot) if pouches else None}
        _write_json(os.path.join(out, "print_plan.json"), plan_doc)
        _write_json(os.path.join(out, "field_report.json"), report)

    run("emit", emit_stage)
    if write:
        with open(os.path.join(out, "log.txt"), "w") as fh:
            for stage, dt in timings:
                fh.write(f"stage {stage} ok {dt:.6f}\n")
            fh.write(f"total {sum(dt for _, dt in timings):.6f}\n")
    return PipelineResult(out if write else None, lattice, plan, report, timings, summary)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_bundle_log(path):
    stages = []
    with open(os.path.join(path, "log.txt")) as fh:
        for line in fh:
            parts = line.split()
            if parts and parts[0] == "stage":
                stages.append((parts[1], float(parts[3])))
    return stages


def validate_all_shells(model):
    return [validate_shell(s.mesh) for s in model.shells()]
