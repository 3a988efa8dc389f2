import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eflesh.errors import BoxTooSmall, EmptyResult, OutOfRange
from eflesh.hull import ConvexPolytope
from eflesh.lattice import CellSpec, LayerGrading, generate_cell, modulus_to_beam, tile_lattice, trim_to_hull
from eflesh.mesh import validate_shell

from .oracles import box_halfspaces, halfspace_volume

REFERENCE_GRADING = (0.001, 0.0015, 0.002)


# ---------------------------------------------------------------- beam width


def test_beam_width_reference_value():
    # 8 * sqrt(sqrt(0.001) / 3), evaluated independently
    expected = 8 * (0.001**0.5 / 3) ** 0.5
    assert modulus_to_beam(0.001, 8.0, 0.4) == pytest.approx(expected, rel=1e-15)
    assert round(modulus_to_beam(0.001, 8.0, 0.4), 3) == 0.821


def test_beam_width_clamped():
    assert modulus_to_beam(1e-5, 8.0, 0.4) == 0.4


def test_beam_width_monotone_in_ratio_and_cell():
    assert modulus_to_beam(0.002, 8, 0.4) > modulus_to_beam(0.001, 8, 0.4)
    assert modulus_to_beam(0.001, 10, 0.4) > modulus_to_beam(0.001, 8, 0.4)


def test_gibson_ashby_inverse():
    # rho = 3 (t / c)^2 and E / E_f = rho^2 should give the ratio back
    t = modulus_to_beam(0.0015, 8.0, 0.0)
    assert (3 * (t / 8.0) ** 2) ** 2 == pytest.approx(0.0015, rel=1e-12)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1, 0.9])
def test_out_of_range(ratio):
    with pytest.raises(OutOfRange):
        modulus_to_beam(ratio, 8.0, 0.4)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-7, 0.3), st.floats(1e-7, 0.3))
def test_beam_width_non_decreasing(a, b):
    a, b = sorted((a, b))
    try:
        wa, wb = modulus_to_beam(a, 8, 0.4), modulus_to_beam(b, 8, 0.4)
    except OutOfRange:
        return
    assert wa <= wb


def test_grading_parse():
    assert LayerGrading.parse("0.001,0.0015,0.002").layer_moduli == REFERENCE_GRADING
    assert LayerGrading.parse("0.01").for_layer(5) == 0.01
    with pytest.raises(OutOfRange):
        LayerGrading(())


# ---------------------------------------------------------------- cells


def test_generate_cell_volumes():
    shells = generate_cell(CellSpec(8.0, 1e-6, 0.8))  # clamped to a 0.8 mm beam
    assert len(shells) == 12
    for s in shells:
        rep = validate_shell(s.mesh)
        assert rep.closed
        assert rep.signed_volume == pytest.approx(0.8 * 0.8 * 8, rel=1e-12)


def _vertex_multiset(shells):
    return sorted(map(tuple, np.round(np.concatenate([s.mesh.vertices for s in shells]), 9)))


def test_cell_rotation_symmetry():
    shells = generate_cell(CellSpec(8.0, 0.001))
    c = np.array([4.0, 4.0, 4.0])
    rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], float)
    for s in shells:
        s.mesh.vertices = (s.mesh.vertices - c) @ rot.T + c
    assert _vertex_multiset(shells) == _vertex_multiset(generate_cell(CellSpec(8.0, 0.001)))


def test_cell_union_volume_bounds():
    spec = CellSpec(8.0, 0.001)
    t, c = spec.beam_width, spec.cell_size
    # inclusion-exclusion for a cube edge frame: 12 beams minus corner overlaps
    union = 12 * t * t * c - 16 * t**3
    assert 0 < union < c**3


def test_cell_translation_equivariance():
    spec = CellSpec(8.0, 0.002)
    o = np.array([3.0, -7.5, 12.25])
    moved = generate_cell(spec, o)
    base = generate_cell(spec)
    for a, b in zip(moved, base):
        np.testing.assert_allclose(a.mesh.vertices, b.mesh.vertices + o, atol=1e-12)


# ---------------------------------------------------------------- tiling


def test_reference_grid():
    lat = tile_lattice((np.zeros(3), np.array([40.0, 40.0, 24.0])), 8.0, REFERENCE_GRADING)
    assert lat.grid_dims == (5, 5, 3)
    assert lat.n_cells == 75
    by_layer = {c.index[2]: c.spec.modulus_ratio for c in lat.cells}
    assert by_layer == {0: 0.001, 1: 0.0015, 2: 0.002}


def test_single_cell():
    lat = tile_lattice((np.zeros(3), np.full(3, 8.0)), 8.0, [0.01])
    assert lat.n_cells == 1
    assert len(lat.beams) == 12


def test_ceiling_division():
    lat = tile_lattice((np.zeros(3), np.array([41.0, 40.0, 24.0])), 8.0, REFERENCE_GRADING)
    assert lat.grid_dims == (6, 5, 3)
    lo, hi = lat.bbox
    for b in lat.beams:
        v = b.poly.vertices[b.poly.used_vertices()]
        assert np.all(v >= lo - 1e-6) and np.all(v <= hi + 1e-6)
        assert validate_shell(b.shell().mesh).closed


def test_grading_extends_last_entry():
    lat = tile_lattice((np.zeros(3), np.array([8.0, 8.0, 40.0])), 8.0, [0.001, 0.002])
    assert [c.spec.modulus_ratio for c in lat.cells] == [0.001, 0.002, 0.002, 0.002, 0.002]


def test_box_too_small():
    with pytest.raises(BoxTooSmall) as exc:
        tile_lattice((np.zeros(3), np.array([40.0, 40.0, 6.0])), 8.0, REFERENCE_GRADING)
    assert exc.value.parameter == "cell_size"
    assert exc.value.exit_code == 3


# ---------------------------------------------------------------- trimming


@pytest.fixture(scope="module")
def lattice40():
    return tile_lattice((np.zeros(3), np.full(3, 40.0)), 8.0, REFERENCE_GRADING)


def _oracle_trimmed_volume(lattice, normals, offsets):
    total = 0.0
    for b in lattice.beams:
        lo, hi = b.poly.bounds()
        bn, bd = box_halfspaces(lo, hi)
        total += halfspace_volume(np.vstack([bn, normals]), np.r_[bd, offsets])
    return total


def test_identity_trim(lattice40):
    hull = ConvexPolytope.box(*lattice40.bbox)
    out = trim_to_hull(lattice40, hull)
    assert out.beam_volume() == pytest.approx(lattice40.beam_volume(), rel=1e-9)
    assert len(out.beams) == len(lattice40.beams)


def test_half_plane_trim_matches_oracle(lattice40):
    lo, hi = lattice40.bbox
    normals = np.vstack([np.eye(3), -np.eye(3), [[1.0, 0, 0]]])
    offsets = np.r_[hi, -lo, 20.0]
    hull = ConvexPolytope.from_planes(normals, offsets)
    out = trim_to_hull(lattice40, hull)
    expected = _oracle_trimmed_volume(lattice40, [[1.0, 0, 0]], [20.0])
    assert out.beam_volume() == pytest.approx(expected, rel=1e-6)
    assert out.beam_volume() <= lattice40.beam_volume()


def test_tetrahedral_hull(lattice40):
    pts = np.array([[2, 2, 2], [38, 4, 3], [5, 37, 6], [20, 20, 38]], float)
    from eflesh.hull import convex_hull

    hull = convex_hull(pts)
    out = trim_to_hull(lattice40, hull)
    for s in out.shells():
        assert hull.max_violation(s.mesh.vertices) <= 1e-6
        assert validate_shell(s.mesh).closed


def test_trim_monotone(lattice40, rng):
    c = np.full(3, 20.0)
    for _ in range(3):
        n = rng.normal(size=(2, 3))
        n /= np.linalg.norm(n, axis=1)[:, None]
        d = n @ c + rng.uniform(2, 15, 2)
        lo, hi = lattice40.bbox
        bn, bd = box_halfspaces(lo, hi)
        h1 = ConvexPolytope.from_planes(np.vstack([bn, n[:1]]), np.r_[bd, d[:1]])
        h12 = ConvexPolytope.from_planes(np.vstack([bn, n]), np.r_[bd, d])
        assert trim_to_hull(lattice40, h12).beam_volume() <= trim_to_hull(lattice40, h1).beam_volume() + 1e-9


def test_parallel_trim_is_identical(lattice40):
    hull = ConvexPolytope.from_planes([[1, 1, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1]], [60.0, 0.0, 0.0, 0.0])
    serial = trim_to_hull(lattice40, hull)
    parallel = trim_to_hull(lattice40, hull, workers=4)
    assert [(b.cell, b.slot) for b in serial.beams] == [(b.cell, b.slot) for b in parallel.beams]
    for a, b in zip(serial.beams, parallel.beams):
        np.testing.assert_array_equal(a.poly.vertices, b.poly.vertices)


def test_disjoint_hull(lattice40):
    hull = ConvexPolytope.box((100, 100, 100), (110, 110, 110))
    with pytest.raises(EmptyResult):
        trim_to_hull(lattice40, hull)


def test_grazing_corner_removed(lattice40):
    # keep only a corner tetrahedron with 8.7e-4 mm legs: about 1e-10 mm^3, below the sliver limit
    n = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
    d = n @ np.full(3, 40.0) - 5e-4
    lo, hi = lattice40.bbox
    bn, bd = box_halfspaces(lo, hi)
    hull = ConvexPolytope(np.vstack([bn, -n]), np.r_[bd, -d], np.full((1, 3), 40.0))
    with pytest.raises(EmptyResult):
        trim_to_hull(lattice40, hull)
