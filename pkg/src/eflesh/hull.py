"""Convex hull of a point set as a list of outward half-spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateInput
from .mesh import TriMesh

PLANE_MERGE_TOL = 1e-9


@dataclass
class ConvexPolytope:
    normals: np.ndarray  # (k, 3) unit outward normals
    offsets: np.ndarray  # (k,) mm; inside means normals @ x <= offsets
    vertices: np.ndarray  # (n, 3) hull vertices, mm
    volume: float = float("nan")

    @property
    def planes(self):
        return list(zip(self.normals, self.offsets))

    def signed_distances(self, points):
        points = np.asarray(points, float).reshape(-1, 3)
        return points @ self.normals.T - self.offsets

    def contains(self, points, tol=1e-6):
        return np.all(self.signed_distances(points) <= tol, axis=1)

    def max_violation(self, points):
        d = self.signed_distances(points)
        return float(max(d.max(), 0.0)) if d.size else 0.0

    @classmethod
    def from_planes(cls, normals, offsets):
        """Build from half-spaces; vertices and volume come from their intersection."""
        from .clip import ConvexPolyhedron

        normals = np.asarray(normals, float).reshape(-1, 3)
        offsets = np.asarray(offsets, float).reshape(-1)
        scale = np.linalg.norm(normals, axis=1)
        normals, offsets = normals / scale[:, None], offsets / scale
        poly = ConvexPolyhedron.from_halfspaces(normals, offsets)
        if poly is None:
            raise DegenerateInput("half-spaces have an empty or unbounded intersection", parameter="planes")
        return cls(normals, offsets, poly.vertices[poly.used_vertices()], poly.volume())

    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        eye = np.eye(3)
        normals = np.concatenate([eye, -eye])
        offsets = np.concatenate([hi, -lo])
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        return cls(normals, offsets, corners, float(np.prod(hi - lo)))


def convex_hull(points) -> ConvexPolytope:
    """Convex hull of a TriMesh or an (n, 3) point array.

    Coplanar hull triangles are merged into a single plane, so a cube gives
    six half-spaces.
    """
    if isinstance(points, TriMesh):
        points = points.vertices[np.unique(points.triangles)]
    points = np.asarray(points, float).reshape(-1, 3)
    if len(points) < 4:
        raise DegenerateInput(f"need at least 4 points for a 3D hull, got {len(points)}", parameter="input")
    centred = points - points.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-9 * max(1.0, np.abs(centred).max())) < 3:
        raise DegenerateInput("all points are coplanar or collinear", parameter="input")
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateInput(str(exc).splitlines()[0], parameter="input") from None

    eq = hull.equations  # n.x + c <= 0 inside
    normals, offsets = [], []
    for n, c in zip(eq[:, :3], -eq[:, 3]):
        for i, (m, d) in enumerate(zip(normals, offsets)):
            if np.abs(n - m).max() < PLANE_MERGE_TOL * 1e3 and abs(c - d) < 1e-6:
                break
        else:
            normals.append(n)
            offsets.append(c)
    normals = np.array(normals)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    verts = points[np.sort(hull.vertices)]
    return ConvexPolytope(normals, np.array(offsets), verts, float(hull.volume))
