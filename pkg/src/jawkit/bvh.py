"""Bounding-volume hierarchy for exact closest-point queries on triangle sets.

Closest-feature codes returned by the queries::

    0 face interior   1/2/3 vertex a/b/c   4/5/6 edge ab/bc/ca

Signs use angle-weighted pseudo-normals of the closest feature (positive on
the side the triangle winding points to).
"""

from __future__ import annotations

import warnings

import numba
import numpy as np

from .errors import InconsistentOrientationWarning

LEAF_SIZE = 4


@numba.njit(cache=True, nogil=True, inline="always")
def _closest_on_triangle(px, py, pz, tri, t):
    # Ericson, Real-Time Collision Detection, 5.1.5; scalar form, no allocation
    ax, ay, az = tri[t, 0, 0], tri[t, 0, 1], tri[t, 0, 2]
    bx, by, bz = tri[t, 1, 0], tri[t, 1, 1], tri[t, 1, 2]
    cx, cy, cz = tri[t, 2, 0], tri[t, 2, 1], tri[t, 2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 1
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 2
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz, 4
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 3
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, 6
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz), 5
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w, 0


@numba.njit(cache=True, nogil=True)
def _box_dist2(px, py, pz, lo, hi, node):
    d = 0.0
    e = lo[node, 0] - px
    if e > 0.0:
        d += e * e
    else:
        e = px - hi[node, 0]
        if e > 0.0:
            d += e * e
    e = lo[node, 1] - py
    if e > 0.0:
        d += e * e
    else:
        e = py - hi[node, 1]
        if e > 0.0:
            d += e * e
    e = lo[node, 2] - pz
    if e > 0.0:
        d += e * e
    else:
        e = pz - hi[node, 2]
        if e > 0.0:
            d += e * e
    return d


@numba.njit(cache=True, nogil=True)
def _query(points, tri, lo, hi, left, right, start, count, order):
    n = points.shape[0]
    out_p = np.empty((n, 3))
    out_d = np.empty(n)
    out_t = np.empty(n, dtype=np.int64)
    out_r = np.empty(n, dtype=np.int64)
    stack = np.empty(256, dtype=np.int64)
    for qi in range(n):
        px, py, pz = points[qi, 0], points[qi, 1], points[qi, 2]
        best = np.inf
        best_t = -1
        best_r = 0
        bx = by = bz = 0.0
        sp = 1
        stack[0] = 0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # strict test: an equally distant box may hold a lower-index tie
            if _box_dist2(px, py, pz, lo, hi, node) > best:
                continue
            if count[node] > 0:
                for j in range(start[node], start[node] + count[node]):
                    t = order[j]
                    qx, qy, qz, region = _closest_on_triangle(px, py, pz, tri, t)
                    d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
                    if d2 < best or (d2 == best and t < best_t):
                        best = d2
                        best_t = t
                        best_r = region
                        bx, by, bz = qx, qy, qz
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(px, py, pz, lo, hi, l)
                dr = _box_dist2(px, py, pz, lo, hi, r)
                # push the farther child first so the nearer one is popped first
                if dl < dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        out_p[qi, 0] = bx
        out_p[qi, 1] = by
        out_p[qi, 2] = bz
        out_d[qi] = np.sqrt(best)
        out_t[qi] = best_t
        out_r[qi] = best_r
    return out_p, out_d, out_t, out_r


@numba.njit(cache=True, nogil=True)
def _brute(points, tri):
    n = points.shape[0]
    out_p = np.empty((n, 3))
    out_d = np.empty(n)
    out_t = np.empty(n, dtype=np.int64)
    for qi in range(n):
        px, py, pz = points[qi, 0], points[qi, 1], points[qi, 2]
        best = np.inf
        for t in range(tri.shape[0]):
            qx, qy, qz, _ = _closest_on_triangle(px, py, pz, tri, t)
            d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
            if d2 < best:
                best = d2
                out_p[qi, 0] = qx
                out_p[qi, 1] = qy
                out_p[qi, 2] = qz
                out_t[qi] = t
        out_d[qi] = np.sqrt(best)
    return out_p, out_d, out_t


def _build(tri: np.ndarray):
    """Median split on the longest centroid axis. Returns flat node arrays."""
    m = len(tri)
    cent = tri.mean(axis=1)
    tmin = tri.min(axis=1)
    tmax = tri.max(axis=1)
    order = np.arange(m, dtype=np.int64)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        for lst in (left, right, start, count):
            lst.append(0)
        lo.append(None)
        hi.append(None)
        return len(left) - 1

    root = new_node()
    work = [(root, 0, m)]
    while work:
        node, s, e = work.pop()
        idx = order[s:e]
        lo[node] = tmin[idx].min(axis=0)
        hi[node] = tmax[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            start[node], count[node] = s, e - s
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[s:e] = idx[part]
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        work.append((r, s + mid, e))
        work.append((l, s, s + mid))
    return (np.array(lo), np.array(hi), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(start, dtype=np.int64),
            np.array(count, dtype=np.int64), order)


class SpatialIndex:
    """BVH over a mesh's triangles with pseudo-normals for sign queries."""

    def __init__(self, mesh, check_orientation: bool = True):
        self.mesh = mesh
        self.tri = np.ascontiguousarray(mesh.vertices[mesh.triangles])
        (self.lo, self.hi, self.left, self.right,
         self.start, self.count, self.order) = _build(self.tri)
        self.consistent = mesh.has_consistent_orientation()
        if check_orientation and not self.consistent:
            warnings.warn(f"mesh {mesh.mesh_id!r} has inconsistently wound triangles; "
                          "signed distances may be wrong", InconsistentOrientationWarning,
                          stacklevel=3)
        self._pseudo = None

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def leaves(self):
        """Triangle ids per leaf (each triangle appears in exactly one leaf)."""
        return [self.order[s:s + c] for s, c in zip(self.start, self.count) if c > 0]

    def query(self, points):
        """Closest points for an ``(n, 3)`` array.

        Returns ``(points, distances, triangle_ids, feature_codes)``.
        """
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return _query(pts, self.tri, self.lo, self.hi, self.left, self.right,
                      self.start, self.count, self.order)

    def brute_force(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return _brute(pts, self.tri)

    # -- pseudo-normals ---------------------------------------------------------

    def _pseudo_normals(self):
        if self._pseudo is not None:
            return self._pseudo
        mesh = self.mesh
        f = mesh.triangles
        fn = mesh.face_normals
        tri = self.tri
        # vertex: angle-weighted sum of incident face normals
        vn = np.zeros_like(mesh.vertices)
        for k in range(3):
            e1 = tri[:, (k + 1) % 3] - tri[:, k]
            e2 = tri[:, (k + 2) % 3] - tri[:, k]
            cosang = np.einsum("ij,ij->i", e1, e2) / (
                np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
            ang = np.arccos(np.clip(cosang, -1.0, 1.0))
            np.add.at(vn, f[:, k], fn * ang[:, None])
        # edge: sum of the (one or two) adjacent face normals
        und = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        _, inv = np.unique(und, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        acc = np.zeros((inv.max() + 1, 3))
        np.add.at(acc, inv, np.concatenate([fn, fn, fn]))
        m = len(f)
        en = np.stack([acc[inv[:m]], acc[inv[m:2 * m]], acc[inv[2 * m:]]], axis=1)
        self._pseudo = (fn, vn, en)
        return self._pseudo

    def pseudo_normal(self, tri_ids, codes) -> np.ndarray:
        fn, vn, en = self._pseudo_normals()
        tri_ids = np.asarray(tri_ids)
        codes = np.asarray(codes)
        out = fn[tri_ids].copy()
        f = self.mesh.triangles
        for c in (1, 2, 3):
            sel = codes == c
            out[sel] = vn[f[tri_ids[sel], c - 1]]
        for c in (4, 5, 6):
            sel = codes == c
            out[sel] = en[tri_ids[sel], c - 4]
        return out

    def signed_query(self, points):
        """Signed distances: positive outside (along the winding normal)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        cp, d, t, r = self.query(pts)
        n = self.pseudo_normal(t, r)
        s = np.einsum("ij,ij->i", pts - cp, n)
        return np.where(s < 0, -d, d), cp, t


def closest_point(index: SpatialIndex, q):
    """``(point, distance, triangle_id)`` for one query point."""
    p, d, t, _ = index.query(np.asarray(q, dtype=float).reshape(1, 3))
    return p[0], float(d[0]), int(t[0])


def signed_distance(index: SpatialIndex, q) -> float:
    d, _, _ = index.signed_query(np.asarray(q, dtype=float).reshape(1, 3))
    return float(d[0])
