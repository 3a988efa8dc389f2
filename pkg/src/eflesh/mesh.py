"""Triangle mesh model plus STL (binary/ASCII) and OBJ reading and writing.

All coordinates are millimetres. STL carries no units, so callers resolve
ambiguity with ``unit_scale`` on load.
"""

from __future__ import annotations

import logging
import os
import re
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (
    ConfigError,
    EmptyMesh,
    IoFailure,
    MalformedHeader,
    TruncatedBody,
    UnreadableFile,
    UnrepresentableCount,
)

log = logging.getLogger(__name__)

MERGE_TOL = 1e-6  # mm
DEGENERATE_AREA = 1e-9  # mm^2

_HEADER_TAG = b"eflesh-stl bbox:"
_RECORD = struct.Struct("<12fH")


@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 3) float64, mm
    triangles: np.ndarray  # (m, 3) int64
    name: str | None = None
    dropped: int = 0  # degenerate triangles removed at load time

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    def __len__(self):
        return len(self.triangles)

    @property
    def bbox(self):
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def triangle_coords(self):
        return self.vertices[self.triangles]

    def areas(self):
        t = self.triangle_coords()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def signed_volume(self):
        t = self.triangle_coords()
        if len(t) == 0:
            return 0.0
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def translated(self, offset):
        return TriMesh(self.vertices + np.asarray(offset, float), self.triangles.copy(), self.name)

    def check(self):
        """Raise ValueError if a structural invariant is broken."""
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")
        if len(self.triangles) and self.areas().min() <= DEGENERATE_AREA:
            raise ValueError("degenerate triangle present")


@dataclass
class Shell:
    mesh: TriMesh
    closed: bool = True


@dataclass
class ShellReport:
    closed: bool
    boundary_edge_count: int
    signed_volume: float
    euler_characteristic: int
    nonmanifold_edge_count: int = 0


def validate_shell(mesh: TriMesh) -> ShellReport:
    """Edge-incidence report for a triangle mesh.

    An undirected edge is closed when used exactly once in each direction.
    Edges used once are boundary edges; anything else is counted as
    non-manifold (and also makes the shell not closed).
    """
    tri = mesh.triangles
    if len(tri) == 0:
        return ShellReport(False, 0, 0.0, 0)
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    lo = directed.min(axis=1)
    hi = directed.max(axis=1)
    forward = (directed[:, 0] == lo).astype(np.int64)
    keys = np.stack([lo, hi], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    total = np.bincount(inverse, minlength=len(uniq))
    fwd = np.bincount(inverse, weights=forward, minlength=len(uniq)).astype(np.int64)
    good = (total == 2) & (fwd == 1)
    boundary = int(np.count_nonzero(total == 1))
    nonmanifold = int(np.count_nonzero(~good & (total != 1)))
    n_vertices = len(np.unique(tri))
    chi = n_vertices - len(uniq) + len(tri)
    closed = boundary == 0 and nonmanifold == 0
    return ShellReport(closed, boundary, mesh.signed_volume(), int(chi), nonmanifold)


def merge_meshes(meshes: Iterable[TriMesh], name=None) -> TriMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    if not verts:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), name)
    return TriMesh(np.concatenate(verts), np.concatenate(tris), name)


def weld(points: np.ndarray, tol: float = MERGE_TOL):
    """Merge points closer than ``tol``.

    Returns (unique_points, index_map). Clusters are transitive; each cluster
    takes the coordinates of its first occurrence, and clusters are numbered
    in order of first occurrence, so the result is deterministic.
    """
    points = np.asarray(points, float)
    n = len(points)
    if n == 0:
        return points.reshape(0, 3), np.zeros(0, dtype=np.int64)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        # exact duplicates are still possible when tol == 0
        labels = np.arange(n)
    else:
        graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
    first = np.full(labels.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return points[first[order]], rank[labels]


def clean(vertices, triangles, name=None) -> TriMesh:
    """Weld duplicate vertices and drop degenerate triangles."""
    vertices = np.asarray(vertices, float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    uniq, remap = weld(vertices)
    tri = remap[triangles] if len(triangles) else triangles
    keep = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
    if keep.any():
        t = uniq[tri]
        area = 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
        keep &= area > DEGENERATE_AREA
    dropped = int(np.count_nonzero(~keep))
    tri = tri[keep]
    # drop vertices no longer referenced, preserving order
    used = np.zeros(len(uniq), dtype=bool)
    used[tri.reshape(-1)] = True
    newidx = np.cumsum(used) - 1
    mesh = TriMesh(uniq[used], newidx[tri], name, dropped)
    if dropped:
        log.warning("dropped %d degenerate triangle(s)%s", dropped, f" from {name}" if name else "")
    return mesh


# ---------------------------------------------------------------- parsing


def _detect(path, data: bytes) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        return "obj"
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return "stl_bin"
    head = data[:512].lstrip()
    if head[:5].lower() == b"solid" and b"facet" in data[:4096]:
        return "stl_ascii"
    if ext == ".stl" or ext == "":
        return "stl_bin"
    raise MalformedHeader(f"cannot detect mesh format of {path}", parameter="format")


def _parse_stl_binary(data: bytes, path):
    if len(data) < 84:
        raise MalformedHeader(f"{path}: {len(data)} bytes is shorter than the 84-byte STL header", parameter="path")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise TruncatedBody(
            f"{path}: header declares {count} triangles ({expected} bytes) but file has {len(data)} bytes",
            parameter="path",
        )
    rec = np.frombuffer(data, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]),
                        count=count, offset=84)
    return rec["v"].astype(np.float64).reshape(-1, 3)


_FLOAT = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:nan|inf))"
_VERTEX_RE = re.compile(rb"vertex\s+" + (_FLOAT + r"\s+" + _FLOAT + r"\s+" + _FLOAT).encode(), re.I)


def _parse_stl_ascii(data: bytes, path):
    if not data.lstrip()[:5].lower() == b"solid":
        raise MalformedHeader(f"{path}: ASCII STL must begin with 'solid'", parameter="path")
    coords = [tuple(map(float, m.groups())) for m in _VERTEX_RE.finditer(data)]
    n_facets = len(re.findall(rb"\bfacet\b", data, re.I))
    if len(coords) != 3 * n_facets or len(coords) % 3:
        raise TruncatedBody(f"{path}: {n_facets} facets but {len(coords)} vertices", parameter="path")
    return np.array(coords, dtype=float).reshape(-1, 3)


def _parse_obj(data: bytes, path):
    verts, faces = [], []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError("face with fewer than 3 vertices")
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
        except (ValueError, IndexError) as exc:
            raise MalformedHeader(f"{path}:{lineno}: {exc}", parameter="path") from None
    verts = np.array(verts, dtype=float).reshape(-1, 3)
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
        raise MalformedHeader(f"{path}: face index out of range", parameter="path")
    return verts, faces


def parse_mesh(path, fmt: str = "auto", unit_scale: float = 1.0) -> TriMesh:
    """Load a mesh, weld vertices within 1e-6 mm and drop degenerate triangles.

    ``fmt`` is one of auto, stl_bin, stl_ascii, obj. The number of dropped
    triangles is available as ``mesh.dropped``.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}", parameter="path") from None
    if fmt == "auto":
        fmt = _detect(path, data)
    if fmt == "stl_bin":
        soup = _parse_stl_binary(data, path)
        verts, tris = soup, np.arange(len(soup)).reshape(-1, 3)
    elif fmt == "stl_ascii":
        soup = _parse_stl_ascii(data, path)
        verts, tris = soup, np.arange(len(soup)).reshape(-1, 3)
    elif fmt == "obj":
        verts, tris = _parse_obj(data, path)
    else:
        raise ConfigError(f"unknown mesh format {fmt!r}", parameter="format")
    if not np.all(np.isfinite(verts)):
        raise MalformedHeader(f"{path}: non-finite vertex coordinates", parameter="path")
    if len(tris) == 0:
        raise EmptyMesh(f"{path}: no triangles", parameter="path")
    if unit_scale != 1.0:
        verts = verts * unit_scale
    name = os.path.splitext(os.path.basename(str(path)))[0]
    mesh = clean(verts, tris, name)
    if len(mesh.triangles) == 0:
        raise EmptyMesh(f"{path}: every triangle was degenerate", parameter="path")
    return mesh


# ---------------------------------------------------------------- emission


def _as_meshes(obj) -> list[TriMesh]:
    if isinstance(obj, TriMesh):
        return [obj]
    if isinstance(obj, Shell):
        return [obj.mesh]
    out = []
    for item in obj:
        out.extend(_as_meshes(item))
    return out


def _normals(t):
    n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def encode_stl_binary(meshes: Sequence[TriMesh], header_name: str | None = None) -> bytes:
    count = sum(len(m.triangles) for m in meshes)
    if count > 0xFFFFFFFF:
        raise UnrepresentableCount(f"{count} triangles exceed the uint32 STL count field", parameter="shells")
    tris = np.concatenate([m.triangle_coords() for m in meshes]) if meshes else np.zeros((0, 3, 3))
    tris32 = tris.astype("<f4")
    lo = tris32.reshape(-1, 3).min(axis=0) if count else np.zeros(3, "<f4")
    hi = tris32.reshape(-1, 3).max(axis=0) if count else np.zeros(3, "<f4")
    header = _HEADER_TAG + lo.astype("<f4").tobytes() + hi.astype("<f4").tobytes()
    if header_name:
        header += b" " + header_name.encode("ascii", "replace")[: 80 - len(header) - 1]
    header = header[:80].ljust(80, b"\0")
    rec = np.zeros(count, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]))
    rec["n"] = _normals(tris32.astype(np.float64)).astype("<f4")
    rec["v"] = tris32
    return header + struct.pack("<I", count) + rec.tobytes()


def encode_stl_ascii(meshes: Sequence[TriMesh], name: str = "eflesh") -> bytes:
    lines = [f"solid {name}"]
    for m in meshes:
        t = m.triangle_coords()
        for tri, n in zip(t.tolist(), _normals(t).tolist()):
            lines.append(f"  facet normal {n[0]!r} {n[1]!r} {n[2]!r}")
            lines.append("    outer loop")
            for v in tri:
                lines.append(f"      vertex {v[0]!r} {v[1]!r} {v[2]!r}")
            lines.append("    endloop")
            lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode("ascii")


def encode_obj(meshes: Sequence[TriMesh]) -> bytes:
    lines = []
    if meshes:
        allv = np.concatenate([m.vertices[np.unique(m.triangles)] for m in meshes if len(m.triangles)])
        lo, hi = allv.min(axis=0), allv.max(axis=0)
        lines.append("# bbox " + " ".join(repr(float(x)) for x in (*lo, *hi)))
    offset = 1
    for i, m in enumerate(meshes):
        lines.append(f"o shell_{i}")
        lines.extend(f"v {x!r} {y!r} {z!r}" for x, y, z in m.vertices.tolist())
        lines.extend(f"f {a + offset} {b + offset} {c + offset}" for a, b, c in m.triangles.tolist())
        offset += len(m.vertices)
    return ("\n".join(lines) + "\n").encode("ascii")


def emit_mesh(shells, path, fmt: str | None = None) -> int:
    """Write a mesh, shell, or sequence of them. Returns bytes written.

    Output order follows the input order (shell index, then triangle index),
    so repeated emission of the same model is byte-identical.
    """
    meshes = _as_meshes(shells)
    if sum(len(m.triangles) for m in meshes) == 0:
        raise EmptyMesh("nothing to emit", parameter="shells")
    if fmt is None:
        fmt = "obj" if str(path).lower().endswith(".obj") else "stl_bin"
    if fmt == "stl_bin":
        payload = encode_stl_binary(meshes)
    elif fmt == "stl_ascii":
        payload = encode_stl_ascii(meshes)
    elif fmt == "obj":
        payload = encode_obj(meshes)
    else:
        raise ConfigError(f"unknown mesh format {fmt!r}", parameter="format")
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}", parameter="path") from None
    return len(payload)


def emission_bbox(path):
    """Bounding box recorded by emit_mesh (binary STL header or OBJ comment), or None."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    if head.startswith(_HEADER_TAG):
        vals = np.frombuffer(head, dtype="<f4", count=6, offset=len(_HEADER_TAG)).astype(float)
        return vals[:3], vals[3:]
    line = head.split(b"\n", 1)[0]
    if line.startswith(b"# bbox "):
        vals = np.array([float(x) for x in line.split()[2:8]])
        return vals[:3], vals[3:]
    return None


# ---------------------------------------------------------------- primitives


def box_mesh(lo, hi, name=None) -> TriMesh:
    """Closed, outward-wound axis-aligned box."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=float)
    t = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom (-z)
        [4, 5, 6], [4, 6, 7],  # top (+z)
        [0, 1, 5], [0, 5, 4],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [1, 2, 6], [1, 6, 5],  # +x
        [3, 0, 4], [3, 4, 7],  # -x
    ])
    return TriMesh(v, t, name)
