import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eflesh.clip import ConvexPolyhedron
from eflesh.errors import DegenerateInput
from eflesh.hull import ConvexPolytope, convex_hull
from eflesh.mesh import box_mesh, validate_shell

from .oracles import brute_force_hull, halfspace_volume

CUBE = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)


def test_cube_corners():
    hull = convex_hull(CUBE)
    assert len(hull.planes) == 6
    assert hull.volume == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.linalg.norm(hull.normals, axis=1), 1.0, atol=1e-9)


def test_interior_point_is_not_a_hull_vertex():
    hull = convex_hull(np.vstack([CUBE, [[0.5, 0.5, 0.5]]]))
    assert len(hull.vertices) == 8
    assert not any(np.allclose(v, 0.5) for v in hull.vertices)
    assert hull.volume == pytest.approx(1.0, abs=1e-12)


def test_hull_of_mesh_input():
    hull = convex_hull(box_mesh((0, 0, 0), (40, 40, 24)))
    assert hull.volume == pytest.approx(40 * 40 * 24, rel=1e-12)


def test_random_ball_matches_brute_force(rng):
    p = rng.normal(size=(100, 3))
    p /= np.linalg.norm(p, axis=1)[:, None]
    p *= rng.uniform(0, 1, (100, 1)) ** (1 / 3)
    _, vol = brute_force_hull(p)
    assert abs(convex_hull(p).volume - vol) <= 1e-9


@pytest.mark.parametrize("points", [
    np.zeros((5, 3)),
    np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 3, 0]], float),
    np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [3, 3, 3]], float),
    CUBE[:3],
])
def test_degenerate_inputs(points):
    with pytest.raises(DegenerateInput) as exc:
        convex_hull(points)
    assert exc.value.exit_code == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 40))
def test_hull_contains_inputs(seed, n):
    p = np.random.default_rng(seed).uniform(-10, 10, (n, 3))
    hull = convex_hull(p)
    assert hull.max_violation(p) <= 1e-6
    assert hull.max_violation(hull.vertices) <= 1e-6
    lo, hi = p.min(axis=0), p.max(axis=0)
    assert hull.volume <= np.prod(hi - lo) + 1e-9


def test_from_planes_box():
    poly = ConvexPolytope.from_planes(*zip(*ConvexPolytope.box((0, 0, 0), (2, 3, 4)).planes))
    assert poly.volume == pytest.approx(24.0)
    with pytest.raises(DegenerateInput):
        ConvexPolytope.from_planes([[1, 0, 0]], [1.0])  # unbounded


# ---------------------------------------------------------------- clipping


def _random_halfspaces(rng, k, center, radius):
    n = rng.normal(size=(k, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    d = n @ center + rng.uniform(0.2, 1.0, k) * radius
    return n, d


def test_clip_keeps_identity():
    box = ConvexPolyhedron.box((0, 0, 0), (1, 1, 1))
    assert box.clip([1, 0, 0], 1.0) is box
    assert box.clip([1, 0, 0], 5.0) is box
    assert box.clip([1, 0, 0], 0.0) is None


def test_clip_half_box():
    box = ConvexPolyhedron.box((0, 0, 0), (2, 2, 2))
    half = box.clip([1, 0, 0], 1.0)
    assert half.volume() == pytest.approx(4.0, rel=1e-12)
    assert validate_shell(half.to_mesh()).closed


def test_clip_through_vertices_and_edges():
    # diagonal plane through two opposite edges of the cube
    box = ConvexPolyhedron.box((0, 0, 0), (1, 1, 1))
    n = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    wedge = box.clip(n, n @ [1, 0, 0])
    assert wedge.volume() == pytest.approx(0.5, rel=1e-12)
    assert validate_shell(wedge.to_mesh()).closed
    # plane through a single corner cuts off a tetrahedron
    n = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    rest = box.clip(-n, -(n @ [1, 0, 0]))
    assert rest.volume() == pytest.approx(1 - 1 / 6, rel=1e-12)
    rep = validate_shell(rest.to_mesh())
    assert rep.closed and rep.euler_characteristic == 2


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12))
def test_clip_matches_halfspace_oracle(seed, k):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-5, 5, 3)
    hi = lo + rng.uniform(0.3, 6, 3)
    n, d = _random_halfspaces(rng, k, (lo + hi) / 2, 0.6 * np.linalg.norm(hi - lo))
    poly = ConvexPolyhedron.box(lo, hi).clip_all(n, d)
    bn = np.vstack([np.eye(3), -np.eye(3), n])
    bd = np.r_[hi, -lo, d]
    expected = halfspace_volume(bn, bd)
    if poly is None:
        assert expected < 1e-6
        return
    rep = validate_shell(poly.to_mesh())
    assert rep.closed and rep.euler_characteristic == 2
    assert rep.signed_volume > 0
    assert poly.volume() == pytest.approx(expected, rel=1e-6, abs=1e-9)
    v = poly.vertices[poly.used_vertices()]
    assert (v @ n.T - d).max() <= 1e-6


def test_clip_monotone(rng):
    box = ConvexPolyhedron.box((0, 0, 0), (4, 4, 4))
    for _ in range(30):
        n, d = _random_halfspaces(rng, 2, np.full(3, 2.0), 3.0)
        one = box.clip_all(n[:1], d[:1])
        both = box.clip_all(n, d)
        v1 = one.volume() if one else 0.0
        v2 = both.volume() if both else 0.0
        assert v2 <= v1 + 1e-12
