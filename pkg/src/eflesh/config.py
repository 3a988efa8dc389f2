"""Pipeline configuration and the pouch/slot layout sidecar (both JSON)."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError, UnreadableFile
from .fabrication import MagnetSpec, PouchSpec, SlotSpec

SCHEMA_VERSION = 1
REFERENCE_GRADING = (0.001, 0.0015, 0.002)


@dataclass
class PipelineConfig:
    input: str = ""
    unit_scale: float = 1.0
    cell_size: float = 8.0
    grading: list = field(default_factory=lambda: list(REFERENCE_GRADING))
    min_beam: float = 0.4
    magnet_diameter: float = 9.525
    magnet_thickness: float = 3.175
    remanence: float = 1.45
    magnet_count: int = 4
    pouch_centers: list | None = None  # explicit centres (mm); overrides magnet_count
    radial_clearance: float = 0.10
    axial_clearance: float = 0.15
    wall: float = 1.2
    lip: float = 0.4
    segments: int = 64
    slot: dict | None = None  # {"dims": [x, y, z], "position": [x, y, z] | None, "open_face": "-z"}
    layer_height: float = 0.2
    polarity: str = "aligned"
    field_plane_mm: float = 15.0
    field_extent_mm: list | None = None  # defaults to the body's x/y extent
    field_resolution: list = field(default_factory=lambda: [41, 41])
    n_slices: int = 8
    output_dir: str = "out"
    workers: int = 1
    version: int = SCHEMA_VERSION

    def validate(self, check_files=True):
        """Raise ConfigError for out-of-bounds values, UnreadableFile for a missing input."""
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"{name}: {msg}", parameter=name)

        need(self.version == SCHEMA_VERSION, "version", f"unsupported schema version {self.version}")
        need(bool(self.input), "input", "an input mesh path is required")
        need(self.unit_scale > 0, "unit_scale", "must be positive")
        need(self.cell_size > 0, "cell_size", "must be positive")
        need(len(self.grading) >= 1 and all(0 < g < 1 for g in self.grading), "grading",
             "needs one or more modulus ratios in (0, 1)")
        need(self.min_beam > 0, "min_beam", "must be positive")
        need(self.magnet_diameter > 0 and self.magnet_thickness > 0, "magnet", "dimensions must be positive")
        need(0 < self.remanence <= 1.6, "remanence", "must be in (0, 1.6] T")
        need(self.magnet_count >= 0, "magnet_count", "must be non-negative")
        need(self.layer_height > 0, "layer_height", "must be positive")
        need(self.polarity in ("aligned", "alternating"), "polarity", "must be aligned or alternating")
        need(len(self.field_resolution) == 2 and min(self.field_resolution) >= 2, "field_resolution",
             "must be two integers >= 2")
        need(self.n_slices >= 1, "n_slices", "must be >= 1")
        if self.slot is not None:
            need("dims" in self.slot and len(self.slot["dims"]) == 3, "slot.dims", "three lengths required")
        if check_files and not os.path.isfile(self.input):
            raise UnreadableFile(f"input mesh {self.input!r} does not exist", parameter="input")

    def magnet(self, polarity=1) -> MagnetSpec:
        return MagnetSpec(self.magnet_diameter, self.magnet_thickness, self.remanence, polarity)

    def pouch(self, center, polarity=1) -> PouchSpec:
        return PouchSpec(tuple(center), self.magnet(polarity), self.radial_clearance, self.axial_clearance,
                         self.wall, self.lip, self.segments)

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}", parameter=unknown[0])
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise UnreadableFile(f"{path}: {exc.strerror or exc}", parameter="config") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})", parameter="config") from None
        cfg = cls.from_dict(data)
        # relative input paths are relative to the config file
        if cfg.input and not os.path.isabs(cfg.input):
            cand = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.input)
            if os.path.exists(cand):
                cfg.input = cand
        return cfg

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())


# ---------------------------------------------------------------- layout sidecar


def layout_to_dict(pouches, slot=None):
    if not pouches:
        raise ValueError("layout needs at least one pouch")
    p0 = pouches[0]
    m = p0.magnet
    return {
        "version": SCHEMA_VERSION,
        "magnet": {"diameter_mm": m.diameter, "thickness_mm": m.thickness, "remanence_T": m.remanence},
        "radial_clearance_mm": p0.radial_clearance,
        "axial_clearance_mm": p0.axial_clearance,
        "wall_mm": p0.wall,
        "lip_mm": p0.lip,
        "pouches": [{"center_mm": list(p.center), "polarity": p.magnet.polarity}
                    for p in sorted(pouches, key=lambda p: p.center)],
        "slot": None if slot is None else {"dims_mm": list(slot.dims), "position_mm": list(slot.position),
                                           "open_face": slot.open_face},
    }


def layout_from_dict(d):
    try:
        mg = d["magnet"]
        base = MagnetSpec(mg["diameter_mm"], mg["thickness_mm"], mg.get("remanence_T", 1.45))
        pouches = [
            PouchSpec(tuple(p["center_mm"]), base.flipped(p.get("polarity", 1)),
                      d.get("radial_clearance_mm", 0.10), d.get("axial_clearance_mm", 0.15),
                      d.get("wall_mm", 1.2), d.get("lip_mm", 0.4))
            for p in d["pouches"]
        ]
        s = d.get("slot")
        slot = None if s is None else SlotSpec(tuple(s["dims_mm"]), tuple(s["position_mm"]), s.get("open_face", "-z"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid layout: {exc}", parameter="layout") from None
    return pouches, slot


def load_layout(path):
    try:
        with open(path) as fh:
            return layout_from_dict(json.load(fh))
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}", parameter="layout") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})", parameter="layout") from None


def save_layout(path, pouches, slot=None):
    with open(path, "w") as fh:
        json.dump(layout_to_dict(pouches, slot), fh, indent=2, sort_keys=True)
        fh.write("\n")
