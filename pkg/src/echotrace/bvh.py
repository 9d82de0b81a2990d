"""Bounding volume hierarchy over world-space triangles.

Binned surface-area-heuristic build, contiguous child allocation, and a
bottom-up refit for pose updates. Queries run in compiled kernels; a
brute-force path over the same triangle arrays serves as the equivalence
oracle for small scenes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import kernels
from .kernels import KERNEL_OPTS, _bvh_any, _bvh_closest

LEAF_SIZE = 4
MAX_DEPTH = 60
SAH_BINS = 16


@njit(**KERNEL_OPTS)
def _closest_entry(ox, oy, oz, dx, dy, dz, nmin, nmax, left, count, order, v0, v1, v2):
    return _bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax, left, count, order, v0, v1, v2)


@njit(**KERNEL_OPTS)
def _any_entry(ox, oy, oz, dx, dy, dz, t_lo, t_hi, nmin, nmax, left, count, order, v0, v1, v2):
    return _bvh_any(ox, oy, oz, dx, dy, dz, t_lo, t_hi, nmin, nmax, left, count, order, v0, v1, v2)


@dataclass
class BVH:
    node_min: np.ndarray  # (n_nodes, 3)
    node_max: np.ndarray
    node_left: np.ndarray  # (n_nodes,) int32: child index, or leaf start into order
    node_count: np.ndarray  # (n_nodes,) int32: 0 for internal, prim count for leaves
    order: np.ndarray  # (n_tris,) int32 triangle ids grouped by leaf
    v0: np.ndarray  # triangle corners, world space
    v1: np.ndarray
    v2: np.ndarray

    def kernel_args(self):
        return (
            self.node_min, self.node_max, self.node_left, self.node_count, self.order,
            self.v0, self.v1, self.v2,
        )

    def closest_hit(self, origin, direction) -> tuple[float, int]:
        """Nearest (t, triangle id); ties resolve to the lower id; miss is (inf, -1)."""
        o = np.asarray(origin, dtype=np.float64)
        d = np.asarray(direction, dtype=np.float64)
        t, i = _closest_entry(o[0], o[1], o[2], d[0], d[1], d[2], *self.kernel_args())
        return float(t), int(i)

    def any_hit(self, origin, direction, t_lo: float, t_hi: float) -> bool:
        o = np.asarray(origin, dtype=np.float64)
        d = np.asarray(direction, dtype=np.float64)
        return bool(_any_entry(o[0], o[1], o[2], d[0], d[1], d[2], t_lo, t_hi, *self.kernel_args()))

    def refit(self) -> None:
        """Recompute node bounds bottom-up after triangle movement."""
        n = len(self.node_count)
        # children are allocated after their parent, so reverse order is bottom-up
        for node in range(n - 1, -1, -1):
            c = self.node_count[node]
            if c > 0:
                ids = self.order[self.node_left[node] : self.node_left[node] + c]
                pts = np.concatenate([self.v0[ids], self.v1[ids], self.v2[ids]])
                self.node_min[node] = pts.min(axis=0)
                self.node_max[node] = pts.max(axis=0)
            else:
                l = self.node_left[node]
                self.node_min[node] = np.minimum(self.node_min[l], self.node_min[l + 1])
                self.node_max[node] = np.maximum(self.node_max[l], self.node_max[l + 1])


def brute_force_closest(origin, direction, v0, v1, v2) -> tuple[float, int]:
    """All-triangles nearest hit, the oracle the BVH must agree with."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    t, i = kernels.brute_closest(o[0], o[1], o[2], d[0], d[1], d[2], v0, v1, v2)
    return float(t), int(i)


def _half_area(bmin, bmax) -> float:
    d = bmax - bmin
    return float(d[0] * d[1] + d[1] * d[2] + d[2] * d[0])


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> BVH:
    """Binned-SAH top-down build over triangle centroid bounds."""
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    v1 = np.ascontiguousarray(v1, dtype=np.float64)
    v2 = np.ascontiguousarray(v2, dtype=np.float64)
    n = len(v0)
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroid = (tri_min + tri_max) * 0.5

    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_left: list[int] = []
    node_count: list[int] = []
    order = np.arange(n, dtype=np.int32)

    def new_node(lo, hi):
        ids = order[lo:hi]
        node_min.append(tri_min[ids].min(axis=0))
        node_max.append(tri_max[ids].max(axis=0))
        node_left.append(lo)
        node_count.append(hi - lo)
        return len(node_count) - 1

    def split(node, lo, hi, depth):
        count = hi - lo
        if count <= LEAF_SIZE or depth >= MAX_DEPTH:
            return
        ids = order[lo:hi].copy()
        cmin = centroid[ids].min(axis=0)
        cmax = centroid[ids].max(axis=0)
        extent = cmax - cmin
        axis = int(np.argmax(extent))
        if extent[axis] <= 0.0:
            return  # all centroids coincide; keep as leaf
        c = centroid[ids, axis]
        rel = (c - cmin[axis]) / extent[axis]
        bins = np.minimum((rel * SAH_BINS).astype(np.int32), SAH_BINS - 1)
        counts = np.bincount(bins, minlength=SAH_BINS)
        best_cost = np.inf
        best_bin = -1
        for b in range(1, SAH_BINS):
            n_l = int(counts[:b].sum())
            n_r = count - n_l
            if n_l == 0 or n_r == 0:
                continue
            in_l = bins < b
            cost = n_l * _half_area(
                tri_min[ids[in_l]].min(axis=0), tri_max[ids[in_l]].max(axis=0)
            ) + n_r * _half_area(
                tri_min[ids[~in_l]].min(axis=0), tri_max[ids[~in_l]].max(axis=0)
            )
            if cost < best_cost:
                best_cost = cost
                best_bin = b
        if best_bin < 0:
            part = np.argsort(c, kind="stable")
            order[lo:hi] = ids[part]
            mid = lo + count // 2
        else:
            in_l = bins < best_bin
            order[lo:hi] = np.concatenate([ids[in_l], ids[~in_l]])
            mid = lo + int(in_l.sum())
            if mid == lo or mid == hi:
                mid = lo + count // 2
        left_id = new_node(lo, mid)
        new_node(mid, hi)  # right child sits at left_id + 1
        node_left[node] = left_id
        node_count[node] = 0
        split(left_id, lo, mid, depth + 1)
        split(left_id + 1, mid, hi, depth + 1)

    root = new_node(0, n)
    split(root, 0, n, 0)
    return BVH(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int32),
        node_count=np.asarray(node_count, dtype=np.int32),
        order=order,
        v0=v0,
        v1=v1,
        v2=v2,
    )
