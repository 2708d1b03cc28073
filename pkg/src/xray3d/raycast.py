"""BVH-accelerated multi-hit ray casting over triangle meshes.

All intersections along a ray are returned sorted by distance, not just
the first, because the codec records every surface crossing. Traversal
is wavefront-vectorized: a frontier of (ray, node) pairs advances one
tree level per iteration, so casting a full pixel grid is a handful of
numpy passes instead of a Python loop per ray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Ray
from .mesh import MeshError, TriangleMesh, face_normal

EPS_MIN = 1e-6  # reject hits this close to the ray origin (self-hits)
EPS_DUP = 1e-6  # merge coincident hits (shared edge/vertex double-counts)
MAX_HITS = 64   # per-ray record cap, far above the codec's layer counts

_LEAF_SIZE = 4
_N_BINS = 16
_RAY_CHUNK = 1 << 18
_BRUTE_THRESHOLD = 64   # test every triangle directly below this face count
_PAIR_BUDGET = 1 << 22  # max vectorized ray-triangle pairs per batch


@dataclass(frozen=True)
class HitRecord:
    """One ray-surface intersection.

    depth is the ray parameter t, equal to Euclidean distance because
    directions are unit length. barycentric holds the weights of the
    face's three vertices (sums to 1).
    """

    depth: float
    face_index: int
    barycentric: tuple[float, float, float]
    position: np.ndarray


@dataclass(frozen=True)
class HitBatch:
    """Hits for a batch of rays, sorted by (ray, depth), duplicates merged."""

    ray: np.ndarray    # (n,) index into the input ray arrays
    depth: np.ndarray  # (n,)
    face: np.ndarray   # (n,)
    bary_u: np.ndarray
    bary_v: np.ndarray

    def offsets(self, n_rays: int) -> np.ndarray:
        """Prefix offsets: hits of ray r occupy [offsets[r], offsets[r+1])."""
        return np.searchsorted(self.ray, np.arange(n_rays + 1))


class BvhAccel:
    """Flattened binned-SAH BVH. Immutable after build; share freely.

    Triangle data is stored as contiguous per-component rows (shape
    (3, n_faces)) so gathered kernels stay cache-friendly.
    """

    __slots__ = (
        "node_min", "node_max", "node_left", "node_right",
        "leaf_start", "leaf_count", "tri_order", "tri_v0", "tri_e1", "tri_e2",
        "n_faces",
    )

    def __init__(self, node_min, node_max, node_left, node_right,
                 leaf_start, leaf_count, tri_order, tri_v0, tri_e1, tri_e2):
        self.node_min = np.ascontiguousarray(node_min.T)
        self.node_max = np.ascontiguousarray(node_max.T)
        self.node_left = node_left
        self.node_right = node_right
        self.leaf_start = leaf_start
        self.leaf_count = leaf_count
        self.tri_order = tri_order
        self.tri_v0 = np.ascontiguousarray(tri_v0.T)
        self.tri_e1 = np.ascontiguousarray(tri_e1.T)
        self.tri_e2 = np.ascontiguousarray(tri_e2.T)
        self.n_faces = self.tri_v0.shape[1]
        for arr in (self.node_min, self.node_max, node_left, node_right,
                    leaf_start, leaf_count, tri_order,
                    self.tri_v0, self.tri_e1, self.tri_e2):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_left)


def _surface_area(bmin: np.ndarray, bmax: np.ndarray) -> float:
    d = bmax - bmin
    return 2.0 * float(d[0] * d[1] + d[1] * d[2] + d[2] * d[0])


def build_bvh(mesh: TriangleMesh) -> BvhAccel:
    """Binned SAH build, leaf size at most 4.

    Traversal answers exactly the same hit sets as brute-force testing
    of every triangle; the tree only prunes.
    """
    if mesh.is_empty:
        raise MeshError("cannot build a BVH over an empty mesh")
    v0, v1, v2 = mesh.triangle_corners()
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroids = 0.5 * (tri_min + tri_max)
    scene_diag = float(np.linalg.norm(tri_max.max(axis=0) - tri_min.min(axis=0)))
    pad = 1e-9 * (scene_diag + 1.0)  # guards against edge-on-box culling

    m = mesh.n_faces
    tri_order = np.arange(m, dtype=np.int64)

    node_min, node_max = [], []
    node_left, node_right = [], []
    leaf_start, leaf_count = [], []

    def new_node() -> int:
        node_min.append(None)
        node_max.append(None)
        node_left.append(-1)
        node_right.append(-1)
        leaf_start.append(-1)
        leaf_count.append(0)
        return len(node_left) - 1

    root = new_node()
    stack = [(root, 0, m)]
    while stack:
        node_id, lo, hi = stack.pop()
        idx = tri_order[lo:hi]
        node_min[node_id] = tri_min[idx].min(axis=0) - pad
        node_max[node_id] = tri_max[idx].max(axis=0) + pad
        count = hi - lo
        if count <= _LEAF_SIZE:
            leaf_start[node_id] = lo
            leaf_count[node_id] = count
            continue

        cen = centroids[idx]
        cmin, cmax = cen.min(axis=0), cen.max(axis=0)
        ext = cmax - cmin
        best_cost, best_axis, best_mask = np.inf, -1, None
        for axis in range(3):
            if ext[axis] <= 1e-12:
                continue
            rel = (cen[:, axis] - cmin[axis]) * (_N_BINS / ext[axis])
            bins = np.minimum(rel.astype(np.int64), _N_BINS - 1)
            counts = np.bincount(bins, minlength=_N_BINS)
            bin_lo = np.full((_N_BINS, 3), np.inf)
            bin_hi = np.full((_N_BINS, 3), -np.inf)
            for b in range(_N_BINS):
                sel = bins == b
                if counts[b]:
                    bin_lo[b] = tri_min[idx[sel]].min(axis=0)
                    bin_hi[b] = tri_max[idx[sel]].max(axis=0)
            lo_sweep = np.minimum.accumulate(bin_lo, axis=0)
            hi_sweep = np.maximum.accumulate(bin_hi, axis=0)
            lo_rsweep = np.minimum.accumulate(bin_lo[::-1], axis=0)[::-1]
            hi_rsweep = np.maximum.accumulate(bin_hi[::-1], axis=0)[::-1]
            n_left = np.cumsum(counts)
            for k in range(_N_BINS - 1):
                nl, nr = n_left[k], count - n_left[k]
                if nl == 0 or nr == 0:
                    continue
                cost = nl * _surface_area(lo_sweep[k], hi_sweep[k]) + \
                    nr * _surface_area(lo_rsweep[k + 1], hi_rsweep[k + 1])
                if cost < best_cost:
                    best_cost, best_axis, best_mask = cost, axis, bins <= k

        if best_mask is None:
            # Centroids coincide (or single occupied bin): split by median.
            order = np.argsort(cen[:, int(np.argmax(ext))], kind="stable")
            half = count // 2
            best_mask = np.zeros(count, dtype=bool)
            best_mask[order[:half]] = True

        left_idx = idx[best_mask]
        right_idx = idx[~best_mask]
        tri_order[lo:lo + len(left_idx)] = left_idx
        tri_order[lo + len(left_idx):hi] = right_idx
        left_id, right_id = new_node(), new_node()
        node_left[node_id] = left_id
        node_right[node_id] = right_id
        stack.append((left_id, lo, lo + len(left_idx)))
        stack.append((right_id, lo + len(left_idx), hi))

    return BvhAccel(
        node_min=np.asarray(node_min, dtype=np.float64),
        node_max=np.asarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        leaf_start=np.asarray(leaf_start, dtype=np.int64),
        leaf_count=np.asarray(leaf_count, dtype=np.int64),
        tri_order=tri_order,
        tri_v0=np.ascontiguousarray(v0),
        tri_e1=np.ascontiguousarray(v1 - v0),
        tri_e2=np.ascontiguousarray(v2 - v0),
    )


def _moller_trumbore_components(
    ox, oy, oz, dx, dy, dz, v0x, v0y, v0z, e1x, e1y, e1z, e2x, e2y, e2z
):
    """Intersection kernel on broadcastable component arrays.

    Returns (accept, t, u, v) with the shared broadcast shape. Edge and
    vertex grazes are accepted inclusively (u, v >= 0, u + v <= 1);
    duplicate records from shared edges merge downstream.
    """
    # pvec = cross(d, e2), det = dot(e1, pvec)
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    nonparallel = np.abs(det) > 1e-12
    inv_det = 1.0 / np.where(nonparallel, det, 1.0)
    sx = ox - v0x
    sy = oy - v0y
    sz = oz - v0z
    u = (sx * px + sy * py + sz * pz) * inv_det
    # qvec = cross(s, e1)
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv_det
    t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
    accept = nonparallel & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > EPS_MIN)
    return accept, t, u, v


def _safe_inverse(dirs_t: np.ndarray) -> np.ndarray:
    """Per-component reciprocal with zeros replaced by a denormal-scale
    stand-in, so slab intervals stay finite: an origin exactly on a
    parallel slab plane yields t = 0 (non-constraining), an origin
    outside yields a same-signed huge interval (correctly culled)."""
    tiny = 1e-300
    safe = np.where(np.abs(dirs_t) < tiny, np.where(dirs_t < 0, -tiny, tiny), dirs_t)
    return 1.0 / safe


def _slab_pairs(accel, inv_t, oinv_t, rays, nodes):
    """Ray/AABB overlap for (ray, node) pairs over [EPS_MIN, inf).

    inv_t is the precomputed per-ray direction reciprocal (3, n) and
    oinv_t = origin * inv (3, n), so each bound costs one gather, one
    multiply, and one subtract per axis.
    """
    bmin, bmax = accel.node_min, accel.node_max
    ix, iy, iz = inv_t[0][rays], inv_t[1][rays], inv_t[2][rays]
    px, py, pz = oinv_t[0][rays], oinv_t[1][rays], oinv_t[2][rays]
    t1 = bmin[0][nodes] * ix - px
    t2 = bmax[0][nodes] * ix - px
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    t1 = bmin[1][nodes] * iy - py
    t2 = bmax[1][nodes] * iy - py
    near = np.maximum(near, np.minimum(t1, t2))
    far = np.minimum(far, np.maximum(t1, t2))
    t1 = bmin[2][nodes] * iz - pz
    t2 = bmax[2][nodes] * iz - pz
    near = np.maximum(near, np.minimum(t1, t2))
    far = np.minimum(far, np.maximum(t1, t2))
    return (far >= near) & (far >= EPS_MIN)


def _index_ranges(counts: np.ndarray) -> np.ndarray:
    starts = np.cumsum(counts) - counts
    return np.arange(counts.sum()) - np.repeat(starts, counts)


def _brute_chunk(accel: BvhAccel, origins, dirs):
    """All-pairs intersection; used when the tree would cost more than it saves.

    Broadcasts rays against triangles as (n, m) component grids.
    """
    ox, oy, oz = (origins[:, k, None] for k in range(3))
    dx, dy, dz = (dirs[:, k, None] for k in range(3))
    accept, t, u, v = _moller_trumbore_components(
        ox, oy, oz, dx, dy, dz,
        accel.tri_v0[0][None, :], accel.tri_v0[1][None, :], accel.tri_v0[2][None, :],
        accel.tri_e1[0][None, :], accel.tri_e1[1][None, :], accel.tri_e1[2][None, :],
        accel.tri_e2[0][None, :], accel.tri_e2[1][None, :], accel.tri_e2[2][None, :],
    )
    rr, tris = np.nonzero(accept)
    return rr.astype(np.int64), t[accept], tris.astype(np.int64), u[accept], v[accept]


def _leaf_hits(accel, origins_t, dirs_t, lray, lnode, lcount):
    starts = accel.leaf_start[lnode]
    rr = np.repeat(lray, lcount)
    tris = accel.tri_order[np.repeat(starts, lcount) + _index_ranges(lcount)]
    accept, t, u, v = _moller_trumbore_components(
        origins_t[0][rr], origins_t[1][rr], origins_t[2][rr],
        dirs_t[0][rr], dirs_t[1][rr], dirs_t[2][rr],
        accel.tri_v0[0][tris], accel.tri_v0[1][tris], accel.tri_v0[2][tris],
        accel.tri_e1[0][tris], accel.tri_e1[1][tris], accel.tri_e1[2][tris],
        accel.tri_e2[0][tris], accel.tri_e2[1][tris], accel.tri_e2[2][tris],
    )
    return rr[accept], t[accept], tris[accept], u[accept], v[accept]


def _cast_chunk(accel: BvhAccel, origins, dirs):
    n = len(origins)
    origins_t = np.ascontiguousarray(origins.T)
    dirs_t = np.ascontiguousarray(dirs.T)
    inv_t = _safe_inverse(dirs_t)
    oinv_t = origins_t * inv_t
    pair_ray = np.arange(n, dtype=np.int64)
    pair_node = np.zeros(n, dtype=np.int64)
    keep = _slab_pairs(accel, inv_t, oinv_t, pair_ray, pair_node)
    pair_ray, pair_node = pair_ray[keep], pair_node[keep]

    hits_ray, hits_t, hits_face, hits_u, hits_v = [], [], [], [], []
    while pair_ray.size:
        counts = accel.leaf_count[pair_node]
        is_leaf = counts > 0
        if is_leaf.any():
            part = _leaf_hits(
                accel, origins_t, dirs_t,
                pair_ray[is_leaf], pair_node[is_leaf], counts[is_leaf],
            )
            if part[0].size:
                hits_ray.append(part[0])
                hits_t.append(part[1])
                hits_face.append(part[2])
                hits_u.append(part[3])
                hits_v.append(part[4])
        inner = ~is_leaf
        if inner.any():
            iray = pair_ray[inner]
            inode = pair_node[inner]
            child_ray = np.concatenate([iray, iray])
            child_node = np.concatenate(
                [accel.node_left[inode], accel.node_right[inode]]
            )
            keep = _slab_pairs(accel, inv_t, oinv_t, child_ray, child_node)
            pair_ray, pair_node = child_ray[keep], child_node[keep]
        else:
            break

    if not hits_ray:
        empty_i = np.empty(0, dtype=np.int64)
        empty_f = np.empty(0, dtype=np.float64)
        return empty_i, empty_f, empty_i.copy(), empty_f.copy(), empty_f.copy()
    return (
        np.concatenate(hits_ray),
        np.concatenate(hits_t),
        np.concatenate(hits_face),
        np.concatenate(hits_u),
        np.concatenate(hits_v),
    )


def _sort_merge_cap(ray, t, face, u, v) -> HitBatch:
    order = np.lexsort((face, t, ray))
    ray, t, face, u, v = ray[order], t[order], face[order], u[order], v[order]
    if ray.size:
        same_ray = np.empty(ray.size, dtype=bool)
        same_ray[0] = False
        same_ray[1:] = ray[1:] == ray[:-1]
        close = np.empty(ray.size, dtype=bool)
        close[0] = False
        close[1:] = (t[1:] - t[:-1]) < EPS_DUP
        keep = ~(same_ray & close)
        ray, t, face, u, v = ray[keep], t[keep], face[keep], u[keep], v[keep]
        # Cap records per ray.
        group_start = np.searchsorted(ray, ray)
        rank = np.arange(ray.size) - group_start
        keep = rank < MAX_HITS
        ray, t, face, u, v = ray[keep], t[keep], face[keep], u[keep], v[keep]
    return HitBatch(ray, t, face, u, v)


def cast_rays(accel: BvhAccel, origins: np.ndarray, directions: np.ndarray) -> HitBatch:
    """All hits for a batch of rays. Directions must be unit length."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(origins)
    if n == 0:
        e = np.empty(0)
        return HitBatch(e.astype(np.int64), e, e.astype(np.int64), e.copy(), e.copy())
    brute = accel.n_faces <= _BRUTE_THRESHOLD
    chunk = max(1, _PAIR_BUDGET // accel.n_faces) if brute else _RAY_CHUNK
    worker = _brute_chunk if brute else _cast_chunk
    parts = []
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        ray, t, face, u, v = worker(accel, origins[lo:hi], directions[lo:hi])
        parts.append((ray + lo, t, face, u, v))
    ray = np.concatenate([p[0] for p in parts])
    t = np.concatenate([p[1] for p in parts])
    face = np.concatenate([p[2] for p in parts])
    u = np.concatenate([p[3] for p in parts])
    v = np.concatenate([p[4] for p in parts])
    return _sort_merge_cap(ray, t, face, u, v)


def cast_ray_all_hits(accel: BvhAccel, mesh: TriangleMesh, ray: Ray) -> list[HitRecord]:
    """All intersections of one ray, nearest first, duplicates merged."""
    batch = cast_rays(accel, ray.origin[None, :], ray.direction[None, :])
    records = []
    for t, f, u, v in zip(batch.depth, batch.face, batch.bary_u, batch.bary_v):
        records.append(
            HitRecord(
                depth=float(t),
                face_index=int(f),
                barycentric=(float(1.0 - u - v), float(u), float(v)),
                position=ray.origin + t * ray.direction,
            )
        )
    return records


def surface_attributes(
    mesh: TriangleMesh, hit: HitRecord
) -> tuple[float, np.ndarray, np.ndarray]:
    """(depth, geometric unit normal, interpolated color) at a hit.

    The normal is the winding-defined face normal, never flipped toward
    the camera. Colorless meshes report white.
    """
    normal = face_normal(mesh, hit.face_index)
    if mesh.vertex_colors is not None:
        w0, w1, w2 = hit.barycentric
        i0, i1, i2 = mesh.faces[hit.face_index]
        color = (
            w0 * mesh.vertex_colors[i0]
            + w1 * mesh.vertex_colors[i1]
            + w2 * mesh.vertex_colors[i2]
        )
    else:
        color = np.ones(3)
    return hit.depth, normal, np.clip(color, 0.0, 1.0)
