"""Independent reference computations used by the tests.

None of these share code with the package: hulls are enumerated by brute
force, clipped volumes come from scipy's half-space intersection, fields are
summed dipole by dipole in plain Python, and layer counts use exact rationals.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

MU0 = 4e-7 * math.pi


# ---------------------------------------------------------------- hulls


def brute_force_hull(points, tol=1e-9):
    """Facet planes and volume of the hull of a small point set by all-triples enumeration.

    Returns (planes, volume) where planes is a list of (unit normal, offset)
    with n.x <= offset for every point.
    """
    pts = np.asarray(points, float)
    scale = max(1.0, float(np.abs(pts).max()))
    planes = []
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        n = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(n)
        if norm < 1e-12 * scale * scale:
            continue
        n = n / norm
        d = n @ pts[i]
        s = pts @ n - d
        if np.all(s <= tol * scale):
            pass
        elif np.all(s >= -tol * scale):
            n, d = -n, -d
        else:
            continue
        if not any(np.allclose(n, m, atol=1e-7) and abs(d - e) < 1e-7 * scale for m, e in planes):
            planes.append((n, d))
    inner = pts.mean(axis=0)
    vol = 0.0
    for n, d in planes:
        on = pts[np.abs(pts @ n - d) <= 1e-7 * scale]
        c = on.mean(axis=0)
        u = on[0] - c if np.linalg.norm(on[0] - c) > 0 else on[1] - c
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)
        ang = np.arctan2((on - c) @ v, (on - c) @ u)
        poly = on[np.argsort(ang)]
        area = 0.0
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            area += 0.5 * (np.cross(a - c, b - c) @ n)
        vol += area * (d - n @ inner) / 3.0
    return planes, vol


def halfspace_volume(normals, offsets):
    """Volume of {x : n.x <= d} via scipy's half-space intersection, 0 if empty or flat."""
    A = np.asarray(normals, float)
    b = np.asarray(offsets, float)
    norms = np.linalg.norm(A, axis=1)
    # Chebyshev centre: maximise r subject to a.x + r|a| <= b
    res = linprog(np.r_[np.zeros(3), -1.0], A_ub=np.c_[A, norms], b_ub=b,
                  bounds=[(None, None)] * 3 + [(0, None)], method="highs")
    if res.status != 0 or res.x[3] < 1e-7:
        return 0.0
    hs = HalfspaceIntersection(np.c_[A, -b], res.x[:3])
    return float(ConvexHull(hs.intersections).volume)


def box_halfspaces(lo, hi):
    n = np.vstack([np.eye(3), -np.eye(3)])
    d = np.r_[np.asarray(hi, float), -np.asarray(lo, float)]
    return n, d


# ---------------------------------------------------------------- magnets


def cylinder_on_axis_bz(br, radius, length, z):
    """On-axis B_z of a uniformly magnetised cylinder, ``z`` measured from its top face."""
    return br / 2 * ((z + length) / math.sqrt((z + length) ** 2 + radius**2) - z / math.sqrt(z * z + radius**2))


def dipole_sum(point, positions, moments):
    """Field at one point from point dipoles, accumulated one term at a time."""
    bx = by = bz = 0.0
    px, py, pz = (float(v) for v in point)
    for (x, y, z), (mx, my, mz) in zip(positions, moments):
        rx, ry, rz = px - x, py - y, pz - z
        r2 = rx * rx + ry * ry + rz * rz
        r = math.sqrt(r2)
        mdotr = mx * rx + my * ry + mz * rz
        k = 1e-7 / (r2 * r2 * r)
        bx += k * (3 * mdotr * rx - mx * r2)
        by += k * (3 * mdotr * ry - my * r2)
        bz += k * (3 * mdotr * rz - mz * r2)
    return bx, by, bz


# ---------------------------------------------------------------- print plan


def ceil_layers(z_text, h_text):
    """Exact ceil(z / h) for decimal strings."""
    q = Fraction(z_text) / Fraction(h_text)
    return -((-q.numerator) // q.denominator)


# ---------------------------------------------------------------- slip


def slip_features_by_hand(rows):
    """Spreadsheet-style recomputation of the 7 slip features from a list of 15-value rows."""
    n = len(rows)
    xy = []
    for k in range(5):
        acc = 0.0
        for r in rows:
            acc += math.hypot(r[3 * k], r[3 * k + 1])
        xy.append(acc / n)
    max_change = max(max(r[c] for r in rows) - min(r[c] for r in rows) for c in range(15))
    drift = [math.sqrt(sum((r[c] - rows[0][c]) ** 2 for c in range(15))) for r in rows]
    mean = sum(drift) / n
    std = math.sqrt(sum((d - mean) ** 2 for d in drift) / n)
    return xy, max_change, std


def trimmed_box_volume(boxes, normals, offsets):
    """Total volume of axis-aligned boxes intersected with {x : n.x <= d}.

    Boxes with every corner inside count in full and boxes with every corner
    beyond one plane count zero; only the straddlers go to halfspace_volume.
    """
    normals = np.asarray(normals, float)
    offsets = np.asarray(offsets, float)
    total = 0.0
    for lo, hi in boxes:
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        s = corners @ normals.T - offsets
        if np.all(s <= 0):
            total += float(np.prod(np.subtract(hi, lo)))
        elif np.any(np.all(s >= 0, axis=0)):
            continue
        else:
            bn, bd = box_halfspaces(lo, hi)
            total += halfspace_volume(np.vstack([bn, normals]), np.r_[bd, offsets])
    return total
