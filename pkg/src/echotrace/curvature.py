"""Offline geometric analysis: discrete mean curvature and BRDF tables.

Per-vertex mean curvature uses the cotangent discretization with mixed
Voronoi areas (obtuse triangles fall back to area/2 at the obtuse corner
and area/4 elsewhere). The per-triangle metric is the curvature range over
the triangle's corners, modulated by an area weight and a global scale; it
vanishes on flat and smoothly curved regions and spikes at creases, which
is exactly what the diffraction sampler needs.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import IsolatedVertex, ParseError
from .mesh import TriangleMesh
from .scene import MaterialSpec

CACHE_MAGIC = b"STUE"
CACHE_VERSION = 1
HEADER_BYTES = 128
FIXED_SLOTS = 12  # 8-byte fields per triangle before the per-bin pairs
FLAG_DEGENERATE = 1


@dataclass
class CurvatureTable:
    """Per-vertex curvature plus per-triangle metric and BRDF parameters."""

    vertex_curvature: np.ndarray  # (nv,) G_v, 1/m
    delta: np.ndarray  # (nt,) curvature range over triangle corners
    metric: np.ndarray  # (nt,) scaled, unitless
    beta: np.ndarray  # (nt, F) radians
    k: np.ndarray  # (nt, F) in [0, 1]
    boundary_vertex: np.ndarray  # (nv,) bool, curvature came from a partial ring

    def __post_init__(self):
        if np.any(self.vertex_curvature < 0.0):
            raise ValueError("vertex curvature magnitudes must be >= 0")
        if np.any(self.delta < 0.0) or np.any(self.metric < 0.0):
            raise ValueError("curvature metric must be >= 0")
        if np.any(self.beta <= 0.0) or np.any(self.beta > np.pi):
            raise ValueError("beta out of (0, pi]")
        if np.any(self.k < 0.0) or np.any(self.k > 1.0):
            raise ValueError("k out of [0, 1]")


def vertex_mean_curvature(mesh: TriangleMesh) -> np.ndarray:
    """G_v = 0.5 * ||K_v|| with K_v the discrete mean-curvature normal.

    Boundary vertices are evaluated on their partial ring (flagged on the
    mesh). Vertices in no non-degenerate triangle get G_v = 0 and a warning.
    """
    nv = mesh.n_vertices
    keep = ~mesh.degenerate
    faces = mesh.faces[keep]
    if len(faces) == 0:
        warnings.warn("mesh has no non-degenerate triangles; curvature set to zero", IsolatedVertex)
        return np.zeros(nv)

    p0 = mesh.vertices[faces[:, 0]]
    p1 = mesh.vertices[faces[:, 1]]
    p2 = mesh.vertices[faces[:, 2]]
    areas = mesh.areas[keep]

    cots = np.empty((len(faces), 3))
    for c, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        pa = (p0, p1, p2)[a]
        pb = (p0, p1, p2)[b]
        pc = (p0, p1, p2)[c]
        u = pa - pc
        v = pb - pc
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cross = np.where(cross > 0.0, cross, np.inf)
        cots[:, c] = np.einsum("ij,ij->i", u, v) / cross

    # cotangent-weighted edge sums: K contribution (x_v - x_j) per half-edge
    K = np.zeros((nv, 3))
    for c, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        ia = faces[:, a]
        ib = faces[:, b]
        w = cots[:, c][:, None]
        pa = mesh.vertices[ia]
        pb = mesh.vertices[ib]
        np.add.at(K, ia, w * (pa - pb))
        np.add.at(K, ib, w * (pb - pa))

    # Meyer mixed area
    amix = np.zeros(nv)
    obtuse_corner = np.argmin(cots, axis=1)  # cot < 0 iff angle > pi/2
    is_obtuse = cots[np.arange(len(faces)), obtuse_corner] < 0.0
    for c, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        ic = faces[:, c]
        ia = faces[:, a]
        ib = faces[:, b]
        # Voronoi part for non-obtuse triangles, seen from corner c:
        # (|c-a|^2 cot(angle at b) + |c-b|^2 cot(angle at a)) / 8
        ca = mesh.vertices[ic] - mesh.vertices[ia]
        cb = mesh.vertices[ic] - mesh.vertices[ib]
        voronoi = (
            np.einsum("ij,ij->i", ca, ca) * cots[:, b]
            + np.einsum("ij,ij->i", cb, cb) * cots[:, a]
        ) / 8.0
        share = np.where(
            is_obtuse,
            np.where(obtuse_corner == c, areas / 2.0, areas / 4.0),
            voronoi,
        )
        np.add.at(amix, ic, share)

    touched = np.zeros(nv, dtype=bool)
    touched[faces.ravel()] = True
    if not touched.all():
        warnings.warn(
            f"{int((~touched).sum())} isolated vertices; their curvature is set to 0",
            IsolatedVertex,
        )

    G = np.zeros(nv)
    ok = touched & (amix > 0.0)
    K_norm = np.linalg.norm(K, axis=1)
    G[ok] = 0.5 * K_norm[ok] / (2.0 * amix[ok])
    return G


def triangle_curvature_metric(
    mesh: TriangleMesh, vertex_curvature: np.ndarray, material: MaterialSpec
) -> np.ndarray:
    """Scaled per-triangle curvature variation: eta * w(A) * (max G - min G).

    w(A) = min(A / A_ref, 1) suppresses sliver triangles; degenerate
    triangles always map to 0.
    """
    g = vertex_curvature[mesh.faces]
    delta = g.max(axis=1) - g.min(axis=1)
    area_ref = material.area_ref
    if area_ref is None:
        area_ref = float(np.median(mesh.areas))
    if area_ref <= 0.0:
        area_ref = 1.0
    w = np.minimum(mesh.areas / area_ref, 1.0)
    metric = material.curvature_scale * w * delta
    metric[mesh.degenerate] = 0.0
    return metric


def map_brdf(metric: np.ndarray, material: MaterialSpec, n_bins: int):
    """Blend material endpoints by saturated curvature: t = min(C/C_sat, 1)."""
    t = np.minimum(metric / material.curvature_saturation, 1.0)[:, None]
    beta = (1.0 - t) * material.beta_smooth[None, :] + t * material.beta_edge[None, :]
    k = (1.0 - t) * material.k_smooth[None, :] + t * material.k_edge[None, :]
    return beta, k


def compute_curvature_table(mesh: TriangleMesh, material: MaterialSpec, n_bins: int) -> CurvatureTable:
    g = vertex_mean_curvature(mesh)
    gc = g[mesh.faces]
    delta = gc.max(axis=1) - gc.min(axis=1)
    delta[mesh.degenerate] = 0.0
    metric = triangle_curvature_metric(mesh, g, material)
    beta, k = map_brdf(metric, material, n_bins)
    return CurvatureTable(
        vertex_curvature=g,
        delta=delta,
        metric=metric,
        beta=beta,
        k=k,
        boundary_vertex=mesh.boundary_vertex.copy(),
    )


def estimate_footprint(n_triangles: int, n_bins: int) -> int:
    """Bytes needed for a curvature/BRDF table: 128 + 8*T*(12+F).

    This is both the planning estimate and the exact on-disk cache size.
    """
    if n_triangles < 0:
        raise ValueError("triangle count must be >= 0")
    if n_bins < 1:
        raise ValueError("bin count must be >= 1")
    total = 128 + 8 * int(n_triangles) * (12 + int(n_bins))
    if total >= 2**64:
        raise OverflowError("footprint exceeds a 64-bit byte count")
    return total


# -- binary cache -------------------------------------------------------------
#
# Little-endian layout, sized exactly at estimate_footprint(T, F):
#   header, 128 bytes: "STUE" | u16 version | u16 kind=1 | u64 T | u64 F |
#                      zero padding to 128
#   per triangle, 8*(12+F) bytes:
#     f64 metric C, f64 delta, f64 centroid xyz, f64 normal xyz, f64 area,
#     f64 G_min, f64 G_max, u64 flags (bit 0: degenerate),
#     then per bin a pair (f32 beta, f32 k)


def write_cache(path, mesh: TriangleMesh, table: CurvatureTable) -> int:
    """Write the per-triangle table; returns the byte count."""
    nt = mesh.n_triangles
    n_bins = table.beta.shape[1]
    centroid = mesh.vertices[mesh.faces].mean(axis=1)
    gc = table.vertex_curvature[mesh.faces]
    fixed = np.empty((nt, FIXED_SLOTS), dtype="<f8")
    fixed[:, 0] = table.metric
    fixed[:, 1] = table.delta
    fixed[:, 2:5] = centroid
    fixed[:, 5:8] = mesh.normals
    fixed[:, 8] = mesh.areas
    fixed[:, 9] = gc.min(axis=1)
    fixed[:, 10] = gc.max(axis=1)
    flags = mesh.degenerate.astype("<u8") * FLAG_DEGENERATE
    fixed[:, 11] = flags.view("<f8")
    pairs = np.empty((nt, n_bins, 2), dtype="<f4")
    pairs[:, :, 0] = table.beta
    pairs[:, :, 1] = table.k
    header = struct.pack("<4sHHQQ", CACHE_MAGIC, CACHE_VERSION, 1, nt, n_bins)
    header += b"\x00" * (HEADER_BYTES - len(header))
    records = np.concatenate(
        [fixed.view("<u1").reshape(nt, -1), pairs.view("<u1").reshape(nt, -1)], axis=1
    )
    blob = header + records.tobytes()
    assert len(blob) == estimate_footprint(nt, n_bins)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read_cache(path) -> dict:
    """Read a cache file back into arrays (inverse of write_cache)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_BYTES:
        raise ParseError(f"{path}: truncated cache header")
    magic, version, kind, nt, n_bins = struct.unpack_from("<4sHHQQ", blob, 0)
    if magic != CACHE_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION or kind != 1:
        raise ParseError(f"{path}: unsupported cache version {version}/{kind}")
    expected = estimate_footprint(nt, n_bins)
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(blob)}")
    rec_bytes = 8 * (FIXED_SLOTS + n_bins)
    raw = np.frombuffer(blob, dtype="<u1", offset=HEADER_BYTES).reshape(nt, rec_bytes)
    fixed = raw[:, : 8 * FIXED_SLOTS].copy().view("<f8").reshape(nt, FIXED_SLOTS)
    pairs = raw[:, 8 * FIXED_SLOTS :].copy().view("<f4").reshape(nt, n_bins, 2)
    return {
        "metric": fixed[:, 0].copy(),
        "delta": fixed[:, 1].copy(),
        "centroid": fixed[:, 2:5].copy(),
        "normal": fixed[:, 5:8].copy(),
        "area": fixed[:, 8].copy(),
        "g_min": fixed[:, 9].copy(),
        "g_max": fixed[:, 10].copy(),
        "flags": fixed[:, 11].copy().view("<u8"),
        "beta": pairs[:, :, 0].astype(np.float64),
        "k": pairs[:, :, 1].astype(np.float64),
    }
