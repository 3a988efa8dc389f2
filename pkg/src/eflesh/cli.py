"""``eflesh`` command line.

Exit codes: 0 ok, 1 usage/config, 2 I/O or parse, 3 geometry, 4 fabrication,
5 simulation. Logs go to stderr; artifacts go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import magnetics
from .config import PipelineConfig, load_layout, save_layout
from .errors import ConfigError, EFleshError
from .fabrication import MagnetSpec, check_single_level, SlotSpec, default_pouch_centers, layer_index, pause_layer, place_pouches, place_slot
from .hull import convex_hull
from .lattice import LayerGrading, tile_lattice, trim_to_hull
from .mesh import emit_mesh, parse_mesh, validate_shell

log = logging.getLogger("eflesh")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _triple(text, n=None, sep="x"):
    vals = [float(v) for v in text.replace(",", sep).split(sep) if v]
    if n and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values separated by '{sep}', got {text!r}")
    return vals


def _grading(text):
    try:
        return LayerGrading.parse(text)
    except (ValueError, EFleshError) as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _fmt3(v):
    return "(" + ", ".join(f"{float(x):.6g}" for x in v) + ")"


def _print_json(doc, path=None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- mesh commands


def cmd_info(args):
    path = args.path
    if os.path.isdir(path):
        from .pipeline import read_bundle_log

        stages = read_bundle_log(path)
        print(f"bundle {path}")
        for name, dt in stages:
            print(f"  {name:<9} {dt:.3f} s")
        for fname in ("model.stl", "print_plan.json", "field_report.json", "log.txt"):
            print(f"  {'present' if os.path.exists(os.path.join(path, fname)) else 'missing':<8} {fname}")
        return 0
    if path.lower().endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        if "magnetometers_mm" in doc:
            from .sensormodel import SensorModel

            model = SensorModel.from_dict(doc)
            print(f"sensor model {path}: {len(model.magnets)} magnet(s), "
                  f"{len(model.layout.positions)} magnetometers, influence length {model.influence_length} mm")
        elif "pouches" in doc:
            pouches, slot = load_layout(path)
            print(f"layout {path}: {len(pouches)} pouch(es), slot={'yes' if slot else 'no'}")
        else:
            cfg = PipelineConfig.load(path)
            cfg.validate(check_files=False)
            print(f"config {path}: input={cfg.input} cell={cfg.cell_size} mm grading={cfg.grading} "
                  f"magnets={cfg.pouch_centers and len(cfg.pouch_centers) or cfg.magnet_count} "
                  f"polarity={cfg.polarity} slot={'yes' if cfg.slot else 'no'}")
        return 0
    mesh = parse_mesh(path, unit_scale=getattr(args, "unit_scale", 1.0))
    rep = validate_shell(mesh)
    lo, hi = mesh.bbox
    print(f"mesh {path}")
    print(f"  vertices   {len(mesh.vertices)}")
    print(f"  triangles  {len(mesh.triangles)}")
    print(f"  dropped    {mesh.dropped}")
    print(f"  bbox       {_fmt3(lo)} .. {_fmt3(hi)}")
    print(f"  extents    {_fmt3(hi - lo)}")
    print(f"  closed={'true' if rep.closed else 'false'} boundary_edges={rep.boundary_edge_count} "
          f"nonmanifold_edges={rep.nonmanifold_edge_count} volume={rep.signed_volume:.6g} "
          f"euler={rep.euler_characteristic}")
    if rep.nonmanifold_edge_count and not rep.boundary_edge_count:
        # typical of an emitted shell soup: touching shells share welded edges
        print("  note: no open edges; non-manifold edges usually mean several touching closed shells")
    return 0


def cmd_convert(args):
    mesh = parse_mesh(args.input, unit_scale=args.unit_scale)
    n = emit_mesh(mesh, args.output, args.format or _fmt_for(args.output))
    log.info("wrote %d bytes to %s", n, args.output)
    return 0


def _fmt_for(path):
    return "obj" if path.lower().endswith(".obj") else "stl_bin"


# ---------------------------------------------------------------- build stages


def _build_lattice(args):
    mesh = parse_mesh(args.input, unit_scale=args.unit_scale)
    hull = convex_hull(mesh)
    lat = tile_lattice(mesh.bbox, args.cell, args.modulus, args.min_beam)
    log.info("grid %s = %d cells", lat.grid_dims, lat.n_cells)
    return trim_to_hull(lat, hull)


def _pouches_from_args(args, lat):
    magnet = MagnetSpec.parse(args.magnet, remanence=args.remanence)
    centers = default_pouch_centers(lat, args.count)
    signs = magnetics.assign_polarities(centers, args.polarity)
    from .fabrication import PouchSpec

    return [PouchSpec(c, magnet.flipped(s), args.radial_clearance, args.axial_clearance, args.wall, args.lip)
            for c, s in zip(centers, signs)]


def cmd_lattice(args):
    lat = _build_lattice(args)
    emit_mesh(lat.shells(), args.output, _fmt_for(args.output))
    log.info("%d beams written to %s", len(lat.beams), args.output)
    return 0


def cmd_pouch(args):
    lat = _build_lattice(args)
    pouches = _pouches_from_args(args, lat)
    lat = place_pouches(lat, pouches)
    if args.output:
        emit_mesh(lat.shells(), args.output, _fmt_for(args.output))
    if args.layout:
        save_layout(args.layout, pouches)
    if not args.output and not args.layout:
        _print_json([{"center_mm": list(p.center), "polarity": p.magnet.polarity} for p in pouches])
    return 0


def cmd_slot(args):
    lat = _build_lattice(args)
    pouches = []
    if args.layout:
        pouches, _ = load_layout(args.layout)
        lat = place_pouches(lat, pouches)
    dims = args.dims
    lo, hi = lat.bbox
    if args.position:
        pos = args.position
    else:
        pos = (lo + hi) / 2
        axis = "xyz".index(args.face[1])
        pos[axis] = hi[axis] - dims[axis] / 2 if args.face[0] == "+" else lo[axis] + dims[axis] / 2
    slot = SlotSpec(tuple(dims), tuple(pos), args.face)
    lat = place_slot(lat, slot, args.wall)
    emit_mesh(lat.shells(), args.output, _fmt_for(args.output))
    if args.layout_out:
        save_layout(args.layout_out, pouches, slot)
    return 0


def cmd_pause(args):
    if args.cavity_top:
        if args.layer_height <= 0:
            raise ConfigError("layer_height must be positive", parameter="layer_height")
        tops = check_single_level(args.cavity_top, args.layer_height)
        print(layer_index(max(tops), args.layer_height))
        return 0
    if args.layout:
        pouches, _ = load_layout(args.layout)
    else:
        # reference build: four 9.525 x 3.175 mm magnets on the mid-plane of a 40 x 40 x 24 mm body
        from .fabrication import PouchSpec

        m = MagnetSpec(9.525, 3.175)
        pouches = [PouchSpec((x, y, 12.0), m) for x in (10.0, 30.0) for y in (10.0, 30.0)]
    plan = pause_layer(pouches, args.layer_height)
    if args.json:
        _print_json(plan.to_dict())
    else:
        print(plan.pause_layer_index)
    return 0


# ---------------------------------------------------------------- magnetics


def _sources(layout_path, polarity, n_slices):
    pouches, _ = load_layout(layout_path)
    if polarity != "layout":
        signs = magnetics.assign_polarities([p.center for p in pouches], polarity)
        pouches = [p.with_polarity(s) for p, s in zip(pouches, signs)]
    centers = np.array([p.center for p in pouches])
    return pouches, magnetics.sources_from_pouches(pouches, n_slices), centers


def cmd_simulate(args):
    pouches, srcs, centers = _sources(args.layout, args.polarity, args.n_slices)
    plane_z = (centers[:, 2].mean() + args.plane_z) * 1e-3
    origin = centers[:, :2].mean(axis=0) * 1e-3
    fmap = magnetics.field_map(srcs, plane_z, tuple(e * 1e-3 for e in args.extent), tuple(int(r) for r in args.res),
                               tuple(origin))
    magnetics.write_field_csv(fmap, args.output)
    if args.pgm:
        magnetics.write_field_pgm(fmap, args.pgm)
    log.info("max |Bz| = %.4e T on plane %.3f mm above magnet centres", float(np.abs(fmap.bz).max()), args.plane_z)
    return 0


def cmd_compare(args):
    from .pipeline import field_report

    pouches, _ = load_layout(args.layout)
    centers = np.array([p.center for p in pouches])
    rep = field_report(pouches, args.plane_z, args.extent, [int(r) for r in args.res],
                       list(centers[:, :2].mean(axis=0)), args.n_slices)
    _print_json(rep, args.output)
    return 0


# ---------------------------------------------------------------- sensing


def _model(path):
    from .sensormodel import SensorModel

    return SensorModel.load(path) if path else SensorModel.default()


def cmd_localize(args):
    from .sensormodel import localize_contact, read_signal_csv

    model = _model(args.model)
    rows = []
    for frame in read_signal_csv(args.signal):
        res = localize_contact(frame, model, tuple(args.guess))
        c = res.contact
        rows.append({"t": frame.timestamp, "x_mm": c.x, "y_mm": c.y, "z_mm": c.z, "residual_T": res.residual,
                     "converged": res.converged, "clamped": res.clamped})
    _print_json(rows, args.output)
    return 0


def cmd_sensitivity(args):
    from .sensormodel import sensitivity, threshold_depth

    model = _model(args.model)
    z = threshold_depth(model, args.sigma)
    force = sensitivity(model, args.sigma, args.stiffness)
    _print_json({"sigma_T": args.sigma, "stiffness_N_per_mm": args.stiffness, "threshold_depth_mm": z,
                 "min_force_N": force})
    return 0


def cmd_slip_train(args):
    from .slip import read_windows_csv, slip_features, train_slip_classifier

    windows, labels = read_windows_csv(args.data)
    feats = [slip_features(w) for w in windows]
    clf = train_slip_classifier(feats, labels, args.lr, args.epochs)
    pred = clf.classify(feats)
    acc = float(np.mean([p == ("force" if l else "no-force") for p, l in zip(pred, labels)]))
    doc = clf.to_dict()
    doc["training_accuracy"] = acc
    doc["n_windows"] = len(windows)
    _print_json(doc, args.output)
    return 0


def cmd_model_template(args):
    from .sensormodel import SensorModel

    SensorModel.default(polarity=args.polarity).save(args.output)
    return 0


# ---------------------------------------------------------------- pipeline


_OVERRIDES = {
    "input": "input", "cell": "cell_size", "modulus": "grading", "min_beam": "min_beam", "count": "magnet_count",
    "polarity": "polarity", "layer_height": "layer_height", "unit_scale": "unit_scale", "output": "output_dir",
}


def cmd_pipeline(args):
    from .pipeline import run_pipeline, stage_plan

    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    for flag, key in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            if isinstance(val, LayerGrading):
                val = list(val.layer_moduli)
            setattr(cfg, key, val)
    if args.magnet:
        cfg.magnet_diameter, cfg.magnet_thickness = _triple(args.magnet, 2)
    if args.no_slot:
        cfg.slot = None
    if args.dry_run:
        cfg.validate()
        print("config ok; stages: " + " -> ".join(stage_plan(cfg)))
        return 0
    res = run_pipeline(cfg, keep_intermediates=args.keep_intermediates)
    plan = res.print_plan
    print(f"wrote {res.output_dir}/model.stl ({res.summary['shells']} shells, "
          f"{res.summary['cells_before_carving']} cells before carving)")
    if plan:
        print(f"pause after layer {plan.pause_layer_index} (z = {plan.pause_z:.3f} mm)")
    if res.field_report:
        r = res.field_report["max"]["reduction_ratio"]
        print(f"stray-field reduction (max |Bz|, alternating vs aligned) at "
              f"{res.field_report['plane_height_above_magnets_mm']} mm: {r if isinstance(r, str) else round(r, 3)}")
    return 0


# ---------------------------------------------------------------- parser


def _lattice_args(p):
    p.add_argument("input", help="input mesh (.stl or .obj)")
    p.add_argument("--cell", type=float, default=8.0, help="cell size, mm")
    p.add_argument("--modulus", type=_grading, default=LayerGrading((0.001, 0.0015, 0.002)),
                   help="modulus ratio per layer, bottom to top (comma list) or a single value")
    p.add_argument("--min-beam", type=float, default=0.4)
    p.add_argument("--unit-scale", type=float, default=1.0, help="multiply input coordinates on load")


def _pouch_args(p):
    p.add_argument("--magnet", default="9.525x3.175", help="DIAMETERxTHICKNESS in mm")
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--polarity", choices=["aligned", "alternating"], default="aligned")
    p.add_argument("--remanence", type=float, default=1.45)
    p.add_argument("--radial-clearance", type=float, default=0.10)
    p.add_argument("--axial-clearance", type=float, default=0.15)
    p.add_argument("--wall", type=float, default=1.2)
    p.add_argument("--lip", type=float, default=0.4)


def build_parser():
    ap = _Parser(prog="eflesh", description="Printable magnetic tactile sensor toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="summarise a mesh, config/layout JSON, or pipeline bundle")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)
    p = sub.add_parser("mesh-info", help="summarise a mesh")
    p.add_argument("path")
    p.add_argument("--unit-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("convert", help="convert between STL and OBJ")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=["stl_bin", "stl_ascii", "obj"])
    p.add_argument("--unit-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("lattice", help="graded lattice trimmed to the input's convex hull")
    _lattice_args(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("pouch", help="lattice plus magnet pouches")
    _lattice_args(p)
    _pouch_args(p)
    p.add_argument("-o", "--output")
    p.add_argument("--layout", help="write the pouch layout JSON sidecar here")
    p.set_defaults(func=cmd_pouch)

    p = sub.add_parser("slot", help="lattice (plus pouches from a layout) with a magnetometer slot")
    _lattice_args(p)
    p.add_argument("--dims", type=lambda s: _triple(s, 3), required=True, help="XxYxZ in mm")
    p.add_argument("--face", default="-z", choices=["+x", "-x", "+y", "-y", "+z", "-z"])
    p.add_argument("--position", type=lambda s: _triple(s, 3, ","), help="slot centre x,y,z in mm")
    p.add_argument("--wall", type=float, default=1.2)
    p.add_argument("--layout", help="pouch layout JSON to include")
    p.add_argument("--layout-out", help="write the combined layout JSON here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_slot)

    p = sub.add_parser("pause", help="print the layer after which to pause for magnet insertion")
    p.add_argument("--layer-height", type=float, default=0.2)
    p.add_argument("--layout", help="pouch layout JSON (default: reference 4-magnet build)")
    p.add_argument("--cavity-top", type=float, nargs="+", help="cavity top heights in mm")
    p.add_argument("--json", action="store_true", help="print the full plan as JSON")
    p.set_defaults(func=cmd_pause)

    p = sub.add_parser("simulate", help="B_z map on a plane above the magnets (CSV, optional PGM)")
    p.add_argument("--layout", required=True)
    p.add_argument("--plane-z", type=float, default=15.0, help="height above magnet centres, mm")
    p.add_argument("--extent", type=lambda s: _triple(s, 2), default=[100.0, 100.0])
    p.add_argument("--res", type=lambda s: _triple(s, 2), default=[200, 200])
    p.add_argument("--polarity", choices=["aligned", "alternating", "layout"], default="layout")
    p.add_argument("--n-slices", type=int, default=8)
    p.add_argument("--pgm")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare-polarity", help="aligned vs alternating stray-field report (JSON)")
    p.add_argument("--layout", required=True)
    p.add_argument("--plane-z", type=float, default=15.0)
    p.add_argument("--extent", type=lambda s: _triple(s, 2), default=[100.0, 100.0])
    p.add_argument("--res", type=lambda s: _triple(s, 2), default=[101, 101])
    p.add_argument("--n-slices", type=int, default=8)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("localize", help="contact location from signal frames")
    p.add_argument("--signal", required=True, help="CSV: t,m0x,m0y,m0z,...,m4z (signal change, T)")
    p.add_argument("--model", help="sensor model JSON (default: reference model)")
    p.add_argument("--guess", type=lambda s: _triple(s, 3, ","), default=[0.0, 0.0, 1.0])
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("sensitivity", help="minimum detectable force by the 6-sigma rule")
    p.add_argument("--sigma", type=float, required=True, help="no-load noise std, T")
    p.add_argument("--stiffness", type=float, required=True, help="N/mm")
    p.add_argument("--model")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("slip-train", help="train the linear slip classifier")
    p.add_argument("--data", required=True, help="CSV: window,label,t,m0x,...,m4z")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_slip_train)

    p = sub.add_parser("model-template", help="write the default sensor model JSON")
    p.add_argument("--polarity", choices=["aligned", "alternating"], default="aligned")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_model_template)

    p = sub.add_parser("pipeline", help="run the full build")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--cell", type=float)
    p.add_argument("--modulus", type=_grading)
    p.add_argument("--min-beam", type=float)
    p.add_argument("--magnet")
    p.add_argument("--count", type=int)
    p.add_argument("--polarity", choices=["aligned", "alternating"])
    p.add_argument("--layer-height", type=float)
    p.add_argument("--unit-scale", type=float)
    p.add_argument("--no-slot", action="store_true")
    p.add_argument("-o", "--output")
    p.add_argument("--keep-intermediates", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return ap


def _join_dash_values(argv):
    # "--face -z" would otherwise read -z as an unknown option
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok == "--face" and out[i + 1][:1] == "-":
            out[i : i + 2] = [f"--face={out[i + 1]}"]
            break
    return out


def main(argv=None):
    argv = _join_dash_values(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EFleshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {ConfigError(str(exc))}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
