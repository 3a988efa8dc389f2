"""Convex polyhedra and exact half-space clipping.

A polyhedron is a vertex array plus polygonal faces (vertex-index loops,
counter-clockwise seen from outside). Clipping against a plane cuts each face
Sutherland-Hodgman style and closes the cut with a cap polygon. Intersection
points are keyed by the edge they lie on, so the two faces sharing an edge
reuse the same vertex and the result stays watertight by construction rather
than by floating-point coincidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh

PLANE_EPS = 1e-7  # mm; vertices this close to a cutting plane are snapped onto it
MIN_VOLUME = 1e-9  # mm^3; anything smaller is treated as clipped away

_BOX_FACES = [
    [0, 3, 2, 1],  # -z
    [4, 5, 6, 7],  # +z
    [0, 1, 5, 4],  # -y
    [2, 3, 7, 6],  # +y
    [1, 2, 6, 5],  # +x
    [3, 0, 4, 7],  # -x
]


@dataclass
class ConvexPolyhedron:
    vertices: np.ndarray
    faces: list

    @classmethod
    def box(cls, lo, hi):
        (x0, y0, z0), (x1, y1, z1) = lo, hi
        v = np.array([
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ], dtype=float)
        return cls(v, [list(f) for f in _BOX_FACES])

    @classmethod
    def from_halfspaces(cls, normals, offsets, bound=1e5):
        """Intersection of half-spaces n.x <= d, or None if empty or unbounded."""
        poly = cls.box([-bound] * 3, [bound] * 3)
        for n, d in zip(normals, offsets):
            poly = poly.clip(n, d)
            if poly is None:
                return None
        if np.abs(poly.vertices[poly.used_vertices()]).max() >= bound * (1 - 1e-9):
            return None
        return poly

    def used_vertices(self):
        return np.unique(np.concatenate([np.asarray(f) for f in self.faces]))

    def translated(self, offset):
        return ConvexPolyhedron(self.vertices + np.asarray(offset, float), [list(f) for f in self.faces])

    def bounds(self):
        v = self.vertices[self.used_vertices()]
        return v.min(axis=0), v.max(axis=0)

    def triangles(self):
        tris = []
        for f in self.faces:
            for k in range(1, len(f) - 1):
                tris.append((f[0], f[k], f[k + 1]))
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def volume(self):
        t = self.vertices[self.triangles()]
        if len(t) == 0:
            return 0.0
        # anchor at a vertex to keep the sum well-conditioned far from the origin
        t = t - self.vertices[self.faces[0][0]]
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def to_mesh(self, name=None) -> TriMesh:
        used = self.used_vertices()
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriMesh(self.vertices[used], remap[self.triangles()], name)

    def clip(self, normal, offset, eps=PLANE_EPS):
        """Keep the part with normal.x <= offset. Returns None if nothing remains.

        Returns ``self`` unchanged when no vertex lies outside.
        """
        normal = np.asarray(normal, float)
        used = self.used_vertices()
        s = np.full(len(self.vertices), np.nan)
        s[used] = self.vertices[used] @ normal - offset
        su = s[used]
        if su.max() <= eps:
            return self
        if su.min() >= -eps:
            return None

        verts = [v for v in self.vertices]
        outside = s > eps
        on = np.abs(s) <= eps
        cut_cache = {}

        def cut(a, b):
            key = (a, b) if a < b else (b, a)
            idx = cut_cache.get(key)
            if idx is None:
                i, j = key
                t = s[i] / (s[i] - s[j])
                verts.append(self.vertices[i] + t * (self.vertices[j] - self.vertices[i]))
                idx = len(verts) - 1
                cut_cache[key] = idx
            return idx

        new_faces = []
        for face in self.faces:
            out = []
            n = len(face)
            for k in range(n):
                a, b = face[k], face[(k + 1) % n]
                if not outside[a]:
                    out.append(a)
                if outside[a] != outside[b]:
                    inner = b if outside[a] else a
                    if not on[inner]:
                        out.append(cut(a, b))
            # collapse repeats (can only appear around snapped vertices)
            dedup = [v for i, v in enumerate(out) if v != out[i - 1]] if len(out) > 1 else out
            if len(dedup) >= 3:
                new_faces.append(dedup)

        on_plane = set(cut_cache.values()) | set(np.flatnonzero(on).tolist())
        # directed edges lying in the plane with no opposite partner bound the cap
        edges = set()
        for f in new_faces:
            for k in range(len(f)):
                a, b = f[k], f[(k + 1) % len(f)]
                if a in on_plane and b in on_plane:
                    edges.add((a, b))
        succ = {}
        for a, b in edges:
            if (b, a) not in edges:
                succ[b] = a  # cap walks the reversed boundary
        if succ:
            start = min(succ)
            loop = [start]
            while True:
                nxt = succ.get(loop[-1])
                if nxt is None or nxt == start or len(loop) > len(succ):
                    break
                loop.append(nxt)
            if len(loop) >= 3:
                new_faces.append(loop)

        if not new_faces:
            return None
        result = ConvexPolyhedron(np.array(verts), new_faces)
        if result.volume() < MIN_VOLUME:
            return None
        return result

    def clip_all(self, normals, offsets, eps=PLANE_EPS):
        poly = self
        for n, d in zip(normals, offsets):
            poly = poly.clip(n, d, eps)
            if poly is None:
                return None
        return poly
