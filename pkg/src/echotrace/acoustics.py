"""Acoustic magnitudes: specular, curvature-sampled diffraction, passive.

Every contribution couples one source, one receiver, and one point in the
scene, carrying a per-bin linear amplitude M(f) = L_geo * L_atm(f) * I(f):
inverse-square spreading, exponential air absorption, and a mechanism
term (specular BRDF lobe, material diffraction coefficient, or source
level). Receivers without line of sight contribute nothing.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .curvature import CurvatureTable
from .errors import ParseError, RevisionMismatch
from .scene import Emitter, Scene
from .tracer import HitBuffer

KIND_SPECULAR = 0
KIND_DIFFRACTION = 1
KIND_PASSIVE = 2

POINTCLOUD_MAGIC = b"STPC"
POINTCLOUD_VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIIIQ")  # magic, ver, pad, N, O, S, R, F, records, revision


def geometric_loss(r: float) -> float:
    """Inverse-square spreading: 1 / r^2."""
    if r <= 0.0:
        raise ValueError("path length must be > 0")
    return 1.0 / (r * r)


def atmospheric_loss(r: float, alpha_db_per_m: float) -> float:
    """Amplitude absorption factor 10^(-alpha * r / 20), in (0, 1]."""
    if r < 0.0:
        raise ValueError("path length must be >= 0")
    if alpha_db_per_m < 0.0:
        raise ValueError("attenuation must be >= 0")
    return 10.0 ** (-(alpha_db_per_m * r) / 20.0)


def specular_intensity(gamma: float, beta: float, k: float) -> float:
    """Gaussian BRDF lobe around the ideal mirror direction: exp(-g^2/2b^2) * k."""
    if beta <= 0.0:
        raise ValueError("beta must be > 0")
    return math.exp(-(gamma * gamma) / (2.0 * (beta * beta))) * k


@dataclass
class Contribution:
    kind: int
    source_id: str
    receiver_id: str
    position: np.ndarray
    path_length: float
    index: int
    magnitudes: np.ndarray  # (F,) float32


@dataclass
class ContributionSet:
    """The simulation "point cloud": flat arrays in canonical record order.

    Canonical order is (kind, source, receiver, point index), which makes
    every downstream reduction independent of worker count. Magnitudes are
    stored as float32, exactly as they travel on the wire.
    """

    scene_revision: int
    source_ids: list[str]
    receiver_ids: list[str]
    n_bins: int
    n_specular_points: int
    n_diffraction_points: int
    kind: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    source: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint32))
    receiver: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint32))
    position: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    path_length: np.ndarray = field(default_factory=lambda: np.zeros(0))
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint32))
    magnitude: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), np.float32))
    stats: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.kind)

    def record(self, i: int) -> Contribution:
        return Contribution(
            kind=int(self.kind[i]),
            source_id=self.source_ids[int(self.source[i])],
            receiver_id=self.receiver_ids[int(self.receiver[i])],
            position=self.position[i].copy(),
            path_length=float(self.path_length[i]),
            index=int(self.index[i]),
            magnitudes=self.magnitude[i].copy(),
        )

    def pair_mask(self, source_id: str, receiver_id: str) -> np.ndarray:
        s = self.source_ids.index(source_id)
        m = self.receiver_ids.index(receiver_id)
        return (self.source == s) & (self.receiver == m)

    def extend(self, other: "ContributionSet") -> "ContributionSet":
        if other.scene_revision != self.scene_revision:
            raise RevisionMismatch("cannot merge contribution sets from different revisions")
        return concatenate_contributions([self, other])

    def to_bytes(self) -> bytes:
        """Little-endian export; the payload of a SIMULATE response."""
        n = len(self)
        f = self.n_bins
        header = _HEADER.pack(
            POINTCLOUD_MAGIC,
            POINTCLOUD_VERSION,
            0,
            self.n_specular_points,
            self.n_diffraction_points,
            len(self.source_ids),
            len(self.receiver_ids),
            f,
            n,
            self.scene_revision,
        )
        rec = np.zeros(n, dtype=_record_dtype(f))
        rec["kind"] = self.kind
        rec["source"] = self.source
        rec["receiver"] = self.receiver
        rec["position"] = self.position
        rec["path_length"] = self.path_length
        rec["index"] = self.index
        rec["magnitude"] = self.magnitude
        return header + rec.tobytes()

    @staticmethod
    def from_bytes(blob: bytes, source_ids=None, receiver_ids=None) -> "ContributionSet":
        if len(blob) < _HEADER.size:
            raise ParseError("point cloud blob shorter than its header")
        magic, version, _, n_spec, n_diff, s, r, f, n, revision = _HEADER.unpack_from(blob, 0)
        if magic != POINTCLOUD_MAGIC:
            raise ParseError(f"bad point cloud magic {magic!r}")
        if version != POINTCLOUD_VERSION:
            raise ParseError(f"unsupported point cloud version {version}")
        dtype = _record_dtype(f)
        expected = _HEADER.size + n * dtype.itemsize
        if len(blob) != expected:
            raise ParseError(f"point cloud should be {expected} bytes, found {len(blob)}")
        rec = np.frombuffer(blob, dtype=dtype, count=n, offset=_HEADER.size)
        return ContributionSet(
            scene_revision=revision,
            source_ids=list(source_ids) if source_ids else [f"s{i}" for i in range(s)],
            receiver_ids=list(receiver_ids) if receiver_ids else [f"m{i}" for i in range(r)],
            n_bins=f,
            n_specular_points=n_spec,
            n_diffraction_points=n_diff,
            kind=rec["kind"].copy(),
            source=rec["source"].copy(),
            receiver=rec["receiver"].copy(),
            position=rec["position"].copy(),
            path_length=rec["path_length"].copy(),
            index=rec["index"].copy(),
            magnitude=rec["magnitude"].copy(),
        )


def _record_dtype(n_bins: int) -> np.dtype:
    return np.dtype(
        [
            ("kind", "<u1"),
            ("source", "<u4"),
            ("receiver", "<u4"),
            ("position", "<f8", (3,)),
            ("path_length", "<f8"),
            ("index", "<u4"),
            ("magnitude", "<f4", (n_bins,)),
        ],
        align=False,
    )


def empty_contribution_set(scene: Scene) -> ContributionSet:
    return ContributionSet(
        scene_revision=scene.revision,
        source_ids=[e.identifier for e in scene.emitters],
        receiver_ids=[r.identifier for r in scene.receivers],
        n_bins=scene.n_bins,
        n_specular_points=0,
        n_diffraction_points=0,
        magnitude=np.zeros((0, scene.n_bins), np.float32),
    )


def concatenate_contributions(parts: list[ContributionSet]) -> ContributionSet:
    """Merge per-stage sets and re-establish canonical record order."""
    base = parts[0]
    merged = ContributionSet(
        scene_revision=base.scene_revision,
        source_ids=base.source_ids,
        receiver_ids=base.receiver_ids,
        n_bins=base.n_bins,
        n_specular_points=sum(p.n_specular_points for p in parts),
        n_diffraction_points=sum(p.n_diffraction_points for p in parts),
        kind=np.concatenate([p.kind for p in parts]),
        source=np.concatenate([p.source for p in parts]),
        receiver=np.concatenate([p.receiver for p in parts]),
        position=np.concatenate([p.position for p in parts]),
        path_length=np.concatenate([p.path_length for p in parts]),
        index=np.concatenate([p.index for p in parts]),
        magnitude=np.concatenate([p.magnitude for p in parts]),
    )
    order = np.lexsort((merged.index, merged.receiver, merged.source, merged.kind))
    for name in ("kind", "source", "receiver", "position", "path_length", "index", "magnitude"):
        setattr(merged, name, getattr(merged, name)[order])
    return merged


# -- per-triangle BRDF assembly ----------------------------------------------


@dataclass
class SceneBrdf:
    """Curvature-derived BRDF parameters concatenated over all instances."""

    beta: np.ndarray  # (T, F)
    k: np.ndarray  # (T, F)
    metric: np.ndarray  # (T,)
    diffraction_coeff: np.ndarray  # (T, F) material I_d per triangle
    scene_revision: int


def assemble_scene_brdf(scene: Scene, tables: list[CurvatureTable]) -> SceneBrdf:
    if len(tables) != len(scene.instances):
        raise ValueError("one curvature table per instance is required")
    n_bins = scene.n_bins
    t = scene.n_triangles
    beta = np.ones((t, n_bins))
    k = np.zeros((t, n_bins))
    metric = np.zeros(t)
    coeff = np.zeros((t, n_bins))
    for i, (inst, table) in enumerate(zip(scene.instances, tables)):
        lo, hi = scene.instance_offsets[i], scene.instance_offsets[i + 1]
        beta[lo:hi] = table.beta
        k[lo:hi] = table.k
        metric[lo:hi] = table.metric
        coeff[lo:hi] = inst.material.diffraction_coeff[None, :]
    return SceneBrdf(
        beta=np.ascontiguousarray(beta),
        k=np.ascontiguousarray(k),
        metric=metric,
        diffraction_coeff=np.ascontiguousarray(coeff),
        scene_revision=scene.revision,
    )


# -- specular -----------------------------------------------------------------


def specular_magnitudes(scene: Scene, hits: HitBuffer, brdf: SceneBrdf) -> ContributionSet:
    """Per (reflection point, visible receiver) magnitudes, Gaussian-lobe BRDF.

    r = path to the hit plus hit-to-receiver leg; gamma is the angle
    between the mirror direction and the hit-to-receiver direction.
    """
    if hits.scene_revision != scene.revision:
        raise RevisionMismatch(
            f"hit buffer is from revision {hits.scene_revision}, scene is {scene.revision}"
        )
    if brdf.scene_revision != scene.revision:
        raise RevisionMismatch("BRDF tables are from a different scene revision")
    out = empty_contribution_set(scene)
    n_pts = len(hits)
    n_rcv = len(scene.receivers)
    out.n_specular_points = n_pts
    if n_pts == 0 or n_rcv == 0:
        return out
    s_idx = out.source_ids.index(hits.emitter_id)
    rcv_pos = np.ascontiguousarray([r.pose.position for r in scene.receivers])
    visible = np.zeros((n_pts, n_rcv), dtype=np.bool_)
    r_out = np.zeros((n_pts, n_rcv))
    mag = np.zeros((n_pts, n_rcv, scene.n_bins), dtype=np.float32)
    kernels.specular_magnitude_kernel(
        np.ascontiguousarray(hits.position),
        np.ascontiguousarray(hits.path_length),
        np.ascontiguousarray(hits.reflection),
        np.ascontiguousarray(hits.triangle),
        rcv_pos,
        scene.alpha_db_per_m,
        brdf.beta,
        brdf.k,
        scene.epsilon,
        *scene.bvh.kernel_args(),
        visible,
        r_out,
        mag,
    )
    return _gather_grid(out, KIND_SPECULAR, s_idx, hits.position, visible, r_out, mag)


def _gather_grid(out, kind, s_idx, positions, visible, r_out, mag) -> ContributionSet:
    """Flatten (point, receiver) grids into canonical (m, point) order."""
    chunks_kind = []
    chunks_src = []
    chunks_rcv = []
    chunks_pos = []
    chunks_r = []
    chunks_idx = []
    chunks_mag = []
    n_rcv = visible.shape[1]
    for m in range(n_rcv):
        mask = visible[:, m]
        pts = np.nonzero(mask)[0]
        if len(pts) == 0:
            continue
        chunks_kind.append(np.full(len(pts), kind, np.uint8))
        chunks_src.append(np.full(len(pts), s_idx, np.uint32))
        chunks_rcv.append(np.full(len(pts), m, np.uint32))
        chunks_pos.append(positions[pts])
        chunks_r.append(r_out[pts, m])
        chunks_idx.append(pts.astype(np.uint32))
        chunks_mag.append(mag[pts, m])
    if chunks_kind:
        out.kind = np.concatenate(chunks_kind)
        out.source = np.concatenate(chunks_src)
        out.receiver = np.concatenate(chunks_rcv)
        out.position = np.concatenate(chunks_pos)
        out.path_length = np.concatenate(chunks_r)
        out.index = np.concatenate(chunks_idx)
        out.magnitude = np.concatenate(chunks_mag)
    return out


# -- diffraction ---------------------------------------------------------------


@dataclass
class DiffractionCandidates:
    """Sampled secondary-source points on high-curvature triangles."""

    emitter_id: str
    scene_revision: int
    position: np.ndarray  # (n, 3)
    triangle: np.ndarray  # (n,) global ids
    instance: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.triangle)


def frustum_instances(scene: Scene, emitter: Emitter) -> list[int]:
    """Instances whose bounding sphere intersects the emitter's view cone."""
    if emitter.frustum_half_angle >= np.pi:
        return list(range(len(scene.instances)))
    axis = emitter.pose.rotate(np.array([0.0, 0.0, 1.0]))
    apex = emitter.pose.position
    chosen = []
    for i in range(len(scene.instances)):
        lo, hi = scene.instance_offsets[i], scene.instance_offsets[i + 1]
        pts = np.vstack([scene.tri_v0[lo:hi], scene.tri_v1[lo:hi], scene.tri_v2[lo:hi]])
        center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        d2 = (pts[:, 0] - center[0]) ** 2 + (pts[:, 1] - center[1]) ** 2 + (pts[:, 2] - center[2]) ** 2
        radius = math.sqrt(float(d2.max()))
        dx = float(center[0] - apex[0])
        dy = float(center[1] - apex[1])
        dz = float(center[2] - apex[2])
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist <= radius:
            chosen.append(i)
            continue
        cos_off = (dx * axis[0] + dy * axis[1] + dz * axis[2]) / dist
        angle = math.acos(min(1.0, max(-1.0, float(cos_off))))
        pad = math.asin(min(1.0, radius / dist))
        if angle <= emitter.frustum_half_angle + pad:
            chosen.append(i)
    return chosen


def sample_diffraction_candidates(
    scene: Scene,
    brdf: SceneBrdf,
    emitter: Emitter,
    count: int,
    seed: int,
    instance_indices: list[int] | None = None,
) -> DiffractionCandidates:
    """Importance-sample candidate points with probability proportional to
    the curvature metric, with a dithered CDF to break quantization.

    Consumes the seeded generator in a fixed order (dither, triangle picks,
    barycentric coordinates) so results are reproducible byte for byte.
    """
    if count < 0:
        raise ValueError("candidate count must be >= 0")
    if brdf.scene_revision != scene.revision:
        raise RevisionMismatch("BRDF tables are from a different scene revision")
    if instance_indices is None:
        instance_indices = frustum_instances(scene, emitter)
    tri_ids = np.concatenate(
        [
            np.arange(scene.instance_offsets[i], scene.instance_offsets[i + 1])
            for i in instance_indices
        ]
    ) if instance_indices else np.zeros(0, dtype=np.int64)
    if len(tri_ids):
        tri_ids = tri_ids[~scene.degenerate_mask()[tri_ids]]
    empty = DiffractionCandidates(
        emitter_id=emitter.identifier,
        scene_revision=scene.revision,
        position=np.zeros((0, 3)),
        triangle=np.zeros(0, np.int64),
        instance=np.zeros(0, np.int32),
    )
    if count == 0 or len(tri_ids) == 0:
        return empty
    weights = brdf.metric[tri_ids]
    # fsum: exactly-rounded mean, reproducible whatever the reduction order
    mean_c = math.fsum(weights) / len(weights)
    if mean_c <= 0.0:
        warnings.warn(
            f"emitter {emitter.identifier}: all curvature metrics are zero inside the "
            "frustum; no diffraction candidates generated"
        )
        return empty
    rng = np.random.default_rng(seed)
    dither = rng.uniform(0.0, 1e-3 * mean_c, size=len(tri_ids))
    cdf = np.cumsum(weights + dither)
    u = rng.random(count) * cdf[-1]
    picks = np.searchsorted(cdf, u, side="right")
    picks = np.minimum(picks, len(tri_ids) - 1)
    chosen = tri_ids[picks]
    bary = rng.random((count, 2))
    s = np.sqrt(bary[:, 0])[:, None]
    b0 = 1.0 - s
    b1 = s * (1.0 - bary[:, 1])[:, None]
    b2 = s * bary[:, 1][:, None]
    pos = b0 * scene.tri_v0[chosen] + b1 * scene.tri_v1[chosen] + b2 * scene.tri_v2[chosen]
    return DiffractionCandidates(
        emitter_id=emitter.identifier,
        scene_revision=scene.revision,
        position=pos,
        triangle=chosen.astype(np.int64),
        instance=scene.tri_instance[chosen],
    )


def filter_diffraction_candidates(
    scene: Scene,
    candidates: DiffractionCandidates,
    emitter: Emitter,
    max_incidence: float | None = None,
) -> DiffractionCandidates:
    """Keep candidates that see the source within the incidence-angle limit."""
    if candidates.scene_revision != scene.revision:
        raise RevisionMismatch("candidates are from a different scene revision")
    if max_incidence is None:
        max_incidence = scene.diffraction_max_incidence
    if len(candidates) == 0:
        return candidates
    src = emitter.pose.position
    to_src = src[None, :] - candidates.position
    # compare in the cosine domain: incidence <= limit iff cos(incidence) >= cos(limit)
    dist = np.sqrt(to_src[:, 0] ** 2 + to_src[:, 1] ** 2 + to_src[:, 2] ** 2)
    ok_dist = dist > 0.0
    unit = np.zeros_like(to_src)
    unit[ok_dist] = to_src[ok_dist] / dist[ok_dist, None]
    normals = scene.tri_normal[candidates.triangle]
    cos_inc = normals[:, 0] * unit[:, 0] + normals[:, 1] * unit[:, 1] + normals[:, 2] * unit[:, 2]
    keep = ok_dist & (cos_inc >= math.cos(max_incidence))
    if keep.any() and scene.bvh is not None:
        pts = candidates.position[keep]
        blocked = np.zeros(len(pts), dtype=np.bool_)
        kernels.los_kernel(
            np.ascontiguousarray(pts),
            np.ascontiguousarray(np.broadcast_to(src, pts.shape)),
            scene.epsilon,
            *scene.bvh.kernel_args(),
            blocked,
        )
        occluded = np.nonzero(keep)[0][blocked]
        keep[occluded] = False
    return DiffractionCandidates(
        emitter_id=candidates.emitter_id,
        scene_revision=candidates.scene_revision,
        position=candidates.position[keep],
        triangle=candidates.triangle[keep],
        instance=candidates.instance[keep],
    )


def diffraction_magnitudes(
    scene: Scene, candidates: DiffractionCandidates, brdf: SceneBrdf
) -> ContributionSet:
    """Omnidirectional secondary sources: M(f) = I_d(f) * L_atm(f, r) / r^2
    over r = source-to-point plus point-to-receiver."""
    if candidates.scene_revision != scene.revision:
        raise RevisionMismatch("candidates are from a different scene revision")
    out = empty_contribution_set(scene)
    out.n_diffraction_points = len(candidates)
    n_rcv = len(scene.receivers)
    if len(candidates) == 0 or n_rcv == 0:
        return out
    emitter = scene.emitter(candidates.emitter_id)
    s_idx = out.source_ids.index(candidates.emitter_id)
    rcv_pos = np.ascontiguousarray([r.pose.position for r in scene.receivers])
    coeff = np.ascontiguousarray(brdf.diffraction_coeff[candidates.triangle])
    visible = np.zeros((len(candidates), n_rcv), dtype=np.bool_)
    r_out = np.zeros((len(candidates), n_rcv))
    mag = np.zeros((len(candidates), n_rcv, scene.n_bins), dtype=np.float32)
    kernels.diffraction_magnitude_kernel(
        np.ascontiguousarray(candidates.position),
        np.ascontiguousarray(emitter.pose.position),
        rcv_pos,
        scene.alpha_db_per_m,
        coeff,
        scene.epsilon,
        *scene.bvh.kernel_args(),
        visible,
        r_out,
        mag,
    )
    return _gather_grid(out, KIND_DIFFRACTION, s_idx, candidates.position, visible, r_out, mag)


# -- passive -------------------------------------------------------------------


def passive_magnitudes(scene: Scene) -> ContributionSet:
    """Direct source-to-receiver paths: M(f) = I_p(f) * L_atm(f, r) / r^2."""
    out = empty_contribution_set(scene)
    records = []
    for si, em in enumerate(scene.emitters):
        src = em.pose.position
        for mi, rcv in enumerate(scene.receivers):
            dx = rcv.pose.position[0] - src[0]
            dy = rcv.pose.position[1] - src[1]
            dz = rcv.pose.position[2] - src[2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r == 0.0:
                continue
            if scene.bvh is not None:
                blocked = np.zeros(1, dtype=np.bool_)
                kernels.los_kernel(
                    src.reshape(1, 3),
                    rcv.pose.position.reshape(1, 3),
                    scene.epsilon,
                    *scene.bvh.kernel_args(),
                    blocked,
                )
                if blocked[0]:
                    continue
            geo = 1.0 / (r * r)
            mags = np.zeros(scene.n_bins, dtype=np.float32)
            for f in range(scene.n_bins):
                atm = 10.0 ** (-(scene.alpha_db_per_m[f] * r) / 20.0)
                mags[f] = np.float32((geo * atm) * em.source_level[f])
            records.append((si, mi, rcv.pose.position.copy(), r, mags))
    if records:
        out.kind = np.full(len(records), KIND_PASSIVE, np.uint8)
        out.source = np.array([rec[0] for rec in records], np.uint32)
        out.receiver = np.array([rec[1] for rec in records], np.uint32)
        out.position = np.array([rec[2] for rec in records])
        out.path_length = np.array([rec[3] for rec in records])
        out.index = np.zeros(len(records), np.uint32)
        out.magnitude = np.array([rec[4] for rec in records], np.float32)
    return out
