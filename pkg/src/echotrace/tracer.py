"""Specular ray engine: emission, bounce walk, and line-of-sight queries.

Rays start at the emitter position along equal-area directions rotated
into the emitter frame (boresight = local +Z). Each surface hit is
recorded with its cumulative path length and mirror-reflection direction;
a ray ends on a miss, when the extra-bounce budget is spent, or when the
accumulated path would exceed the emitter's range. Continuation origins
are nudged off the surface by a scene-diameter-relative epsilon.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .scene import Emitter, Scene
from .sphere import equal_area_directions


def reflect(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror direction d about surface normal n: d - 2 (d.n) n."""
    d = np.asarray(d, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return d - 2.0 * float(d @ n) * n


@dataclass
class HitRecord:
    ray: int
    bounce: int
    position: np.ndarray
    triangle: int
    instance: int
    path_length: float  # cumulative from the emitter, m
    reflection: np.ndarray  # unit mirror direction
    occluded_to_origin: bool


@dataclass
class HitBuffer:
    """Per-ray, per-bounce specular hit records in (ray, bounce) order."""

    emitter_id: str
    scene_revision: int
    ray: np.ndarray  # (n,) int32
    bounce: np.ndarray  # (n,) int32, contiguous from 0 per ray
    position: np.ndarray  # (n, 3)
    triangle: np.ndarray  # (n,) int32, global triangle id
    instance: np.ndarray  # (n,) int32
    path_length: np.ndarray  # (n,)
    reflection: np.ndarray  # (n, 3)
    occluded_to_origin: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.ray)

    def record(self, i: int) -> HitRecord:
        return HitRecord(
            ray=int(self.ray[i]),
            bounce=int(self.bounce[i]),
            position=self.position[i].copy(),
            triangle=int(self.triangle[i]),
            instance=int(self.instance[i]),
            path_length=float(self.path_length[i]),
            reflection=self.reflection[i].copy(),
            occluded_to_origin=bool(self.occluded_to_origin[i]),
        )

    def dump(self, path) -> None:
        """Debug dump, little-endian: "STHB" | u16 ver | u16 pad | u64 count,
        then per record: u32 ray, u32 bounce, i32 triangle, i32 instance,
        f64 pos xyz, f64 path, f64 reflection xyz, u8 occluded, 7 pad bytes."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sHHQ", b"STHB", 1, 0, len(self)))
            for i in range(len(self)):
                fh.write(
                    struct.pack(
                        "<IIii3dd3dB7x",
                        int(self.ray[i]),
                        int(self.bounce[i]),
                        int(self.triangle[i]),
                        int(self.instance[i]),
                        *self.position[i],
                        float(self.path_length[i]),
                        *self.reflection[i],
                        int(self.occluded_to_origin[i]),
                    )
                )


def emission_directions(emitter: Emitter) -> np.ndarray:
    """Equal-area directions rotated into the emitter frame."""
    local = equal_area_directions(emitter.n_rays)
    return emitter.pose.rotate(local)


def trace_specular(scene: Scene, emitter: Emitter) -> HitBuffer:
    """Walk every emitted ray through its specular bounces.

    Deterministic: output ordering is (ray index, bounce index) and worker
    count never changes results.
    """
    dirs = np.ascontiguousarray(emission_directions(emitter))
    n_rays = len(dirs)
    max_records = emitter.max_extra_bounces + 1
    if scene.bvh is None:
        return HitBuffer(
            emitter_id=emitter.identifier,
            scene_revision=scene.revision,
            ray=np.zeros(0, np.int32),
            bounce=np.zeros(0, np.int32),
            position=np.zeros((0, 3)),
            triangle=np.zeros(0, np.int32),
            instance=np.zeros(0, np.int32),
            path_length=np.zeros(0),
            reflection=np.zeros((0, 3)),
            occluded_to_origin=np.zeros(0, bool),
        )

    out_count = np.zeros(n_rays, dtype=np.int32)
    out_tri = np.full((n_rays, max_records), -1, dtype=np.int32)
    out_pos = np.zeros((n_rays, max_records, 3))
    out_rtot = np.zeros((n_rays, max_records))
    out_refl = np.zeros((n_rays, max_records, 3))
    out_occ = np.zeros((n_rays, max_records), dtype=np.bool_)
    kernels.trace_kernel(
        np.ascontiguousarray(emitter.pose.position),
        dirs,
        max_records,
        emitter.max_range,
        scene.epsilon,
        *scene.bvh.kernel_args(),
        scene.tri_normal,
        out_count,
        out_tri,
        out_pos,
        out_rtot,
        out_refl,
        out_occ,
    )

    keep = np.arange(max_records)[None, :] < out_count[:, None]
    ray_idx, bounce_idx = np.nonzero(keep)
    tri = out_tri[ray_idx, bounce_idx]
    return HitBuffer(
        emitter_id=emitter.identifier,
        scene_revision=scene.revision,
        ray=ray_idx.astype(np.int32),
        bounce=bounce_idx.astype(np.int32),
        position=out_pos[ray_idx, bounce_idx],
        triangle=tri,
        instance=scene.tri_instance[tri],
        path_length=out_rtot[ray_idx, bounce_idx],
        reflection=out_refl[ray_idx, bounce_idx],
        occluded_to_origin=out_occ[ray_idx, bounce_idx],
    )


def line_of_sight(scene: Scene, a, b) -> bool:
    """True iff the open segment (a, b), retracted by the scene epsilon at
    both ends, crosses no triangle."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        raise ValueError("line_of_sight endpoints must differ")
    if scene.bvh is None:
        return True
    blocked = np.zeros(1, dtype=np.bool_)
    kernels.los_kernel(
        a.reshape(1, 3), b.reshape(1, 3), scene.epsilon, *scene.bvh.kernel_args(), blocked
    )
    return not bool(blocked[0])


def line_of_sight_batch(scene: Scene, a_pts: np.ndarray, b_pts: np.ndarray) -> np.ndarray:
    """Vectorized line_of_sight: returns a visibility mask."""
    a_pts = np.ascontiguousarray(a_pts, dtype=np.float64)
    b_pts = np.ascontiguousarray(b_pts, dtype=np.float64)
    if scene.bvh is None:
        return np.ones(len(a_pts), dtype=bool)
    blocked = np.zeros(len(a_pts), dtype=np.bool_)
    kernels.los_kernel(a_pts, b_pts, scene.epsilon, *scene.bvh.kernel_args(), blocked)
    return ~blocked
