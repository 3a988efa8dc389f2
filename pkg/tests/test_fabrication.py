import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eflesh.errors import (
    MultiplePauseLevels,
    PouchOutsideBody,
    PouchOverlap,
    PouchTooTallForLayer,
    SlotIntersectsPouch,
    SlotOutsideBody,
)
from eflesh.fabrication import (
    MagnetSpec,
    PouchSpec,
    SlotSpec,
    cup_shell,
    default_pouch_centers,
    housing_shell,
    layer_index,
    pause_layer,
    place_pouches,
    place_slot,
)
from eflesh.hull import ConvexPolytope
from eflesh.lattice import tile_lattice, trim_to_hull
from eflesh.mesh import validate_shell

from .oracles import ceil_layers

MAGNET = MagnetSpec(9.525, 3.175)
SMALL = MagnetSpec(4.763, 1.588)


@pytest.fixture(scope="module")
def body():
    lo, hi = np.zeros(3), np.array([40.0, 40.0, 24.0])
    lat = tile_lattice((lo, hi), 8.0, (0.001, 0.0015, 0.002))
    return trim_to_hull(lat, ConvexPolytope.box(lo, hi))


@pytest.fixture(scope="module")
def four_pouches(body):
    return [PouchSpec(c, MAGNET) for c in default_pouch_centers(body, 4)]


def _polygon_area(radius, n):
    return 0.5 * n * radius * radius * math.sin(2 * math.pi / n)


# ---------------------------------------------------------------- specs


def test_cavity_dimensions():
    p = PouchSpec((0, 0, 0), MAGNET)
    assert 2 * p.cavity_radius == pytest.approx(9.725, abs=1e-12)
    assert p.cavity_height == pytest.approx(3.325, abs=1e-12)
    assert p.cavity_radius - MAGNET.radius == pytest.approx(p.radial_clearance, abs=1e-12)
    assert p.cavity_height - MAGNET.thickness == pytest.approx(p.axial_clearance, abs=1e-12)
    assert 2 * PouchSpec((0, 0, 0), SMALL).cavity_radius == pytest.approx(4.963, abs=1e-12)


def test_magnet_parse():
    m = MagnetSpec.parse("9.525x3.175")
    assert (m.diameter, m.thickness, m.remanence, m.polarity) == (9.525, 3.175, 1.45, 1)
    with pytest.raises(ValueError):
        MagnetSpec(9.5, 3.0, remanence=2.0)
    with pytest.raises(ValueError):
        MagnetSpec(-1, 3.0)


def test_pouch_wall_below_min_beam():
    with pytest.raises(ValueError):
        PouchSpec((0, 0, 0), MAGNET, wall=0.2)


# ---------------------------------------------------------------- shells


@pytest.mark.parametrize("segments", [8, 32, 64])
@pytest.mark.parametrize("lip", [0.0, 0.4])
def test_housing_is_closed_torus(segments, lip):
    p = PouchSpec((3.0, -2.0, 7.5), MAGNET, lip=lip, segments=segments)
    rep = validate_shell(housing_shell(p))
    assert rep.closed
    assert rep.euler_characteristic == 0
    sx, sy, sz = p.housing_size
    bore = _polygon_area(p.cavity_radius, segments) * p.cavity_height
    bore += _polygon_area(p.cavity_radius - lip, segments) * (sz - p.cavity_height)
    assert rep.signed_volume == pytest.approx(sx * sy * sz - bore, rel=1e-9)


def test_housing_size_formula():
    p = PouchSpec((0, 0, 0), MAGNET)
    np.testing.assert_allclose(p.housing_size, [9.525 + 0.2 + 2.4, 9.525 + 0.2 + 2.4, 3.175 + 0.3 + 2.4])


@pytest.mark.parametrize("face", ["+x", "-x", "+y", "-y", "+z", "-z"])
def test_cup_shell_every_face(face):
    axis = "xyz".index(face[1])
    outer_lo, outer_hi = np.zeros(3), np.array([10.0, 12.0, 14.0])
    pocket_lo, pocket_hi = np.array([2.0, 2.0, 2.0]), np.array([8.0, 10.0, 12.0])
    if face[0] == "+":
        pocket_hi[axis] = outer_hi[axis]
    else:
        pocket_lo[axis] = outer_lo[axis]
    rep = validate_shell(cup_shell(outer_lo, outer_hi, pocket_lo, pocket_hi, face))
    assert rep.closed and rep.euler_characteristic == 2
    assert rep.signed_volume == pytest.approx(np.prod(outer_hi - outer_lo) - np.prod(pocket_hi - pocket_lo))


# ---------------------------------------------------------------- placement


def test_default_centres(body):
    assert default_pouch_centers(body, 4) == [(10.0, 10.0, 12.0), (30.0, 10.0, 12.0), (10.0, 30.0, 12.0),
                                              (30.0, 30.0, 12.0)]
    assert default_pouch_centers(body, 0) == []


def test_place_four_pouches(body, four_pouches):
    out = place_pouches(body, four_pouches)
    housings = [s for s in out.solids if s.kind == "pouch"]
    assert len(housings) == 4
    for s in housings:
        rep = validate_shell(s.mesh)
        assert rep.closed and rep.signed_volume > 0 and rep.euler_characteristic == 0
    assert len(out.beams) < len(body.beams)


def test_no_beam_enters_a_cavity(body, four_pouches):
    out = place_pouches(body, four_pouches)
    for p in four_pouches:
        cx, cy, _ = p.center
        for b in out.beams:
            lo, hi = b.poly.bounds()
            if hi[2] <= p.cavity_bottom or lo[2] >= p.cavity_top:
                continue
            # distance from the cavity axis to the beam's footprint rectangle
            dx = max(lo[0] - cx, 0.0, cx - hi[0])
            dy = max(lo[1] - cy, 0.0, cy - hi[1])
            assert math.hypot(dx, dy) >= p.cavity_radius


def test_zero_pouches_is_identity(body):
    assert place_pouches(body, []) is body


def test_order_independent(body, four_pouches):
    shuffled = list(four_pouches)
    random.Random(3).shuffle(shuffled)
    a = place_pouches(body, four_pouches)
    b = place_pouches(body, shuffled)
    assert [(x.cell, x.slot) for x in a.beams] == [(x.cell, x.slot) for x in b.beams]
    for sa, sb in zip(a.solids, b.solids):
        np.testing.assert_array_equal(sa.mesh.vertices, sb.mesh.vertices)


def test_overlap(body):
    with pytest.raises(PouchOverlap) as exc:
        place_pouches(body, [PouchSpec((10, 10, 12), MAGNET), PouchSpec((20, 10, 12), MAGNET)])
    assert exc.value.exit_code == 4


def test_outside_body(body):
    with pytest.raises(PouchOutsideBody):
        place_pouches(body, [PouchSpec((2, 10, 12), MAGNET)])


def test_cavity_across_layer_boundary(body):
    with pytest.raises(PouchTooTallForLayer):
        place_pouches(body, [PouchSpec((20, 20, 16.0), MAGNET)])


# ---------------------------------------------------------------- slot


def _bottom_slot(dims=(32, 32, 2)):
    return SlotSpec(dims, (20.0, 20.0, dims[2] / 2), "-z")


def test_slot_plate(body, four_pouches):
    lat = place_pouches(body, four_pouches)
    out = place_slot(lat, _bottom_slot())
    plates = [s for s in out.solids if s.kind == "slot"]
    assert len(plates) == 1
    rep = validate_shell(plates[0].mesh)
    assert rep.closed and rep.signed_volume > 0
    # channel cross-section at the open face is exactly 32 x 32
    v = plates[0].mesh.vertices
    rim = v[(np.abs(v[:, 2]) < 1e-12) & (v[:, 0] > 3) & (v[:, 0] < 37) & (v[:, 1] > 3) & (v[:, 1] < 37)]
    assert np.ptp(rim[:, 0]) == pytest.approx(32.0) and np.ptp(rim[:, 1]) == pytest.approx(32.0)


def test_interior_slot(body):
    with pytest.raises(SlotOutsideBody):
        place_slot(body, SlotSpec((10, 10, 2), (20, 20, 6), "-z"))


def test_slot_into_pouch(body, four_pouches):
    lat = place_pouches(body, four_pouches)
    with pytest.raises(SlotIntersectsPouch):
        place_slot(lat, SlotSpec((30, 30, 12), (20, 20, 6), "-z"))


# ---------------------------------------------------------------- pause layer


def test_reference_pause(four_pouches):
    plan = pause_layer(four_pouches, 0.2)
    assert plan.cavity_top == pytest.approx(13.6625, abs=1e-12)
    assert plan.pause_layer_index == 69
    assert plan.pause_z == pytest.approx(13.8, abs=1e-12)


def test_exact_multiple():
    assert layer_index(13.8, 0.2) == 69
    p = PouchSpec((0, 0, 13.8 - 3.325 / 2), MAGNET)
    assert pause_layer([p], 0.2).pause_layer_index == 69


def test_two_levels():
    p1 = PouchSpec((0, 0, 8.0 - 3.325 / 2), MAGNET)
    p2 = PouchSpec((30, 0, 16.0 - 3.325 / 2), MAGNET)
    with pytest.raises(MultiplePauseLevels) as exc:
        pause_layer([p1, p2], 0.2)
    assert exc.value.pause_layers == [40, 80]


def test_layer_index_matches_exact_oracle():
    rng = random.Random(7)
    for _ in range(1000):
        z = f"{rng.uniform(0.5, 60):.4f}"
        h = rng.choice(["0.1", "0.12", "0.15", "0.2", "0.25", "0.3"])
        assert layer_index(float(z), float(h)) == ceil_layers(z, h), (z, h)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200000), st.sampled_from(["0.1", "0.2", "0.28"]))
def test_plan_invariants(top_e4, h):
    top = top_e4 / 1e4
    p = PouchSpec((0, 0, top - 3.325 / 2), MAGNET)
    plan = pause_layer([p], float(h))
    assert plan.pause_z == pytest.approx(plan.pause_layer_index * float(h))
    assert plan.pause_z >= p.cavity_top - 1e-9
    assert plan.pause_z - p.cavity_top < float(h)
