"""Bounding volume hierarchy over triangle meshes.

Binary tree, median split on the longest centroid axis, leaves hold at most
four triangles. Intersections resolve ties on (t, original triangle id), so
query answers are bit-identical to a brute-force loop over all triangles
regardless of tree shape or traversal order.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from umbra.mesh import TriangleMesh, MeshError

LEAF_SIZE = 4
DET_EPS = 1e-12
RAY_TMIN = 1e-9

_STACK_DEPTH = 128


@dataclass(frozen=True)
class Bvh:
    """Flat-array tree plus triangles pre-packed in leaf order.

    node_left/node_right are child indices for interior nodes (-1 at
    leaves); node_start/node_count give a leaf's range in the packed
    triangle arrays; tri_id maps packed position back to the original
    triangle index.
    """

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_a: np.ndarray
    tri_e1: np.ndarray
    tri_e2: np.ndarray
    tri_id: np.ndarray

    @property
    def num_nodes(self):
        return len(self.node_min)

    @property
    def num_triangles(self):
        return len(self.tri_id)


def triangle_soup(mesh: TriangleMesh):
    """Per-triangle (a, e1, e2) arrays in original order."""
    v = mesh.vertices
    t = mesh.triangles
    a = v[t[:, 0]]
    return a, v[t[:, 1]] - a, v[t[:, 2]] - a


def build_bvh(mesh: TriangleMesh) -> Bvh:
    if mesh is None or mesh.num_triangles == 0:
        raise MeshError("cannot build a BVH over an empty mesh")
    v = mesh.vertices
    t = mesh.triangles
    corners = v[t]  # (m, 3, 3)
    tri_min = corners.min(axis=1)
    tri_max = corners.max(axis=1)
    cent = (tri_min + tri_max) * 0.5

    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []
    order = []

    def emit(idx):
        nid = len(node_min)
        node_min.append(tri_min[idx].min(axis=0))
        node_max.append(tri_max[idx].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(-1)
        node_count.append(0)
        if len(idx) <= LEAF_SIZE:
            node_start[nid] = len(order)
            node_count[nid] = len(idx)
            order.extend(sorted(int(i) for i in idx))
            return nid
        span = cent[idx].max(axis=0) - cent[idx].min(axis=0)
        axis = int(np.argmax(span))
        # stable (centroid, id) key keeps the build deterministic
        perm = np.lexsort((idx, cent[idx, axis]))
        idx = idx[perm]
        half = len(idx) // 2
        node_left[nid] = emit(idx[:half])
        node_right[nid] = emit(idx[half:])
        return nid

    emit(np.arange(mesh.num_triangles, dtype=np.int64))

    order = np.asarray(order, dtype=np.int64)
    a, e1, e2 = triangle_soup(mesh)
    return Bvh(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        node_start=np.asarray(node_start, dtype=np.int64),
        node_count=np.asarray(node_count, dtype=np.int64),
        tri_a=np.ascontiguousarray(a[order]),
        tri_e1=np.ascontiguousarray(e1[order]),
        tri_e2=np.ascontiguousarray(e2[order]),
        tri_id=order,
    )


@njit(cache=True, nogil=True, error_model="numpy", inline="always")
def _tri_hit(ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns hit distance t or -1.0 for a miss."""
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < DET_EPS:
        return -1.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    w = (dx * qx + dy * qy + dz * qz) * inv
    if w < 0.0 or u + w > 1.0:
        return -1.0
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@njit(cache=True, nogil=True, error_model="numpy", inline="always")
def _box_near(bminx, bminy, bminz, bmaxx, bmaxy, bmaxz, ox, oy, oz, dx, dy, dz):
    """Entry distance of a ray into a box, or inf when it misses.

    Zero direction components are handled by explicit branches so no NaN
    can leak out of 0 * inf and silently skip a box.
    """
    tnear = -np.inf
    tfar = np.inf
    if dx != 0.0:
        inv = 1.0 / dx
        t1 = (bminx - ox) * inv
        t2 = (bmaxx - ox) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tnear:
            tnear = t1
        if t2 < tfar:
            tfar = t2
    elif ox < bminx or ox > bmaxx:
        return np.inf
    if dy != 0.0:
        inv = 1.0 / dy
        t1 = (bminy - oy) * inv
        t2 = (bmaxy - oy) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tnear:
            tnear = t1
        if t2 < tfar:
            tfar = t2
    elif oy < bminy or oy > bmaxy:
        return np.inf
    if dz != 0.0:
        inv = 1.0 / dz
        t1 = (bminz - oz) * inv
        t2 = (bmaxz - oz) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tnear:
            tnear = t1
        if t2 < tfar:
            tfar = t2
    elif oz < bminz or oz > bmaxz:
        return np.inf
    if tnear > tfar or tfar < 0.0:
        return np.inf
    return tnear


@njit(cache=True, nogil=True, error_model="numpy")
def closest_hit(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id,
    ox, oy, oz, dx, dy, dz, tmin, tmax,
):
    """Nearest (t, original id) with ties broken toward the lower id.

    Returns (inf, -1) on a miss. Box pruning only skips nodes strictly
    beyond the current best, so the result equals the brute-force minimum
    under the same (t, id) ordering.
    """
    best_t = tmax
    best_id = np.int64(-1)
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        near = _box_near(
            node_min[node, 0], node_min[node, 1], node_min[node, 2],
            node_max[node, 0], node_max[node, 1], node_max[node, 2],
            ox, oy, oz, dx, dy, dz,
        )
        if near > best_t:
            continue
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for k in range(start, start + count):
                t = _tri_hit(
                    tri_a[k, 0], tri_a[k, 1], tri_a[k, 2],
                    tri_e1[k, 0], tri_e1[k, 1], tri_e1[k, 2],
                    tri_e2[k, 0], tri_e2[k, 1], tri_e2[k, 2],
                    ox, oy, oz, dx, dy, dz,
                )
                if t > tmin and (t < best_t or (t == best_t and tri_id[k] < best_id)):
                    best_t = t
                    best_id = tri_id[k]
        else:
            stack[top] = node_right[node]
            stack[top + 1] = node_left[node]
            top += 2
    if best_id < 0:
        return np.inf, np.int64(-1)
    return best_t, best_id


@njit(cache=True, nogil=True, error_model="numpy")
def any_hit(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id,
    ox, oy, oz, dx, dy, dz, tmin, tmax,
):
    """True iff any triangle is hit with t in (tmin, tmax)."""
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        near = _box_near(
            node_min[node, 0], node_min[node, 1], node_min[node, 2],
            node_max[node, 0], node_max[node, 1], node_max[node, 2],
            ox, oy, oz, dx, dy, dz,
        )
        if near > tmax:
            continue
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for k in range(start, start + count):
                t = _tri_hit(
                    tri_a[k, 0], tri_a[k, 1], tri_a[k, 2],
                    tri_e1[k, 0], tri_e1[k, 1], tri_e1[k, 2],
                    tri_e2[k, 0], tri_e2[k, 1], tri_e2[k, 2],
                    ox, oy, oz, dx, dy, dz,
                )
                if tmin < t < tmax:
                    return True
        else:
            stack[top] = node_right[node]
            stack[top + 1] = node_left[node]
            top += 2
    return False


@njit(cache=True, nogil=True, error_model="numpy")
def _closest_batch(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_a, tri_e1, tri_e2, tri_id,
    origins, dirs, tmin, out_t, out_id,
):
    for i in range(origins.shape[0]):
        t, tid = closest_hit(
            node_min, node_max, node_left, node_right, node_start, node_count,
            tri_a, tri_e1, tri_e2, tri_id,
            origins[i, 0], origins[i, 1], origins[i, 2],
            dirs[i, 0], dirs[i, 1], dirs[i, 2],
            tmin, np.inf,
        )
        out_t[i] = t
        out_id[i] = tid


def closest_hits(bvh: Bvh, origins, dirs, tmin=RAY_TMIN):
    """Batch nearest-hit query. Misses yield (inf, -1)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = origins.shape[0]
    out_t = np.empty(n, dtype=np.float64)
    out_id = np.empty(n, dtype=np.int64)
    _closest_batch(
        bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
        bvh.node_start, bvh.node_count,
        bvh.tri_a, bvh.tri_e1, bvh.tri_e2, bvh.tri_id,
        origins, dirs, float(tmin), out_t, out_id,
    )
    return out_t, out_id
