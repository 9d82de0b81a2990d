"""Scene model: meshes placed by rigid poses, materials, emitters, receivers.

A Scene is immutable once built. `with_pose` produces a new revision that
shares mesh data, re-applies the one changed transform, and refits the
acceleration structure. All units are SI (m, s, Hz, rad); binary files
little-endian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bvh import BVH, build_bvh
from .errors import (
    InvalidFrequencyGrid,
    MissingMesh,
    ParseError,
    UnknownEntity,
    UnknownMaterial,
)
from .geometry import Pose
from .mesh import TriangleMesh, load_mesh

DEFAULT_SPEED_OF_SOUND = 343.0  # m/s
DEFAULT_DIFFRACTION_CANDIDATES_PER_MESH = 256
DEFAULT_MAX_INCIDENCE = np.pi / 2.0
SELF_INTERSECT_SCALE = 1e-6  # epsilon = this * scene diameter


def _per_bin(value, n_bins: int, name: str) -> np.ndarray:
    """Broadcast a scalar or validate a length-F list onto the bin grid."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n_bins, float(arr))
    if arr.shape == (n_bins,):
        return arr.copy()
    raise ParseError(f"{name}: expected a scalar or {n_bins} per-bin values, got shape {arr.shape}")


@dataclass
class MaterialSpec:
    """Acoustic surface description, per frequency bin where applicable.

    beta_* are BRDF lobe opening angles in radians, k_* reflection
    magnitudes in [0, 1], diffraction_coeff the omnidirectional secondary
    source strength. curvature_scale and curvature_saturation shape the
    curvature-to-BRDF mapping; area_ref is the area-weight breakpoint
    (None means: median triangle area of each mesh it is bound to).
    """

    identifier: str
    beta_smooth: np.ndarray
    beta_edge: np.ndarray
    k_smooth: np.ndarray
    k_edge: np.ndarray
    diffraction_coeff: np.ndarray
    curvature_scale: float = 1.0
    curvature_saturation: float = 50.0
    area_ref: float | None = None

    def __post_init__(self):
        for name in ("beta_smooth", "beta_edge"):
            b = getattr(self, name)
            if np.any(b <= 0.0) or np.any(b > np.pi):
                raise ParseError(f"material {self.identifier}: {name} must lie in (0, pi]")
        for name in ("k_smooth", "k_edge"):
            k = getattr(self, name)
            if np.any(k < 0.0) or np.any(k > 1.0):
                raise ParseError(f"material {self.identifier}: {name} must lie in [0, 1]")
        if np.any(self.diffraction_coeff < 0.0):
            raise ParseError(f"material {self.identifier}: diffraction_coeff must be >= 0")
        if not self.curvature_scale > 0.0:
            raise ParseError(f"material {self.identifier}: curvature_scale must be > 0")
        if not self.curvature_saturation > 0.0:
            raise ParseError(f"material {self.identifier}: curvature_saturation must be > 0")
        if self.area_ref is not None and not self.area_ref > 0.0:
            raise ParseError(f"material {self.identifier}: area_ref must be > 0")

    def to_dict(self) -> dict:
        return {
            "id": self.identifier,
            "curvature_scale": self.curvature_scale,
            "curvature_saturation": self.curvature_saturation,
            "area_ref_m2": self.area_ref,
            "beta_smooth_rad": self.beta_smooth.tolist(),
            "beta_edge_rad": self.beta_edge.tolist(),
            "k_smooth": self.k_smooth.tolist(),
            "k_edge": self.k_edge.tolist(),
            "diffraction_coeff": self.diffraction_coeff.tolist(),
        }


@dataclass
class Emitter:
    """Sound source: pose (boresight along local +Z), ray budget and spectrum."""

    identifier: str
    pose: Pose
    n_rays: int = 10000
    max_extra_bounces: int = 2
    max_range: float = 50.0
    frustum_half_angle: float = np.pi
    source_level: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    gain_table: "object | None" = None

    def __post_init__(self):
        if self.n_rays < 1:
            raise ParseError(f"emitter {self.identifier}: ray count must be >= 1")
        if self.max_extra_bounces < 0:
            raise ParseError(f"emitter {self.identifier}: max extra bounces must be >= 0")
        if not self.max_range > 0.0:
            raise ParseError(f"emitter {self.identifier}: max range must be > 0")
        if not (0.0 < self.frustum_half_angle <= np.pi):
            raise ParseError(f"emitter {self.identifier}: frustum half-angle must lie in (0, pi]")

    def to_dict(self) -> dict:
        return {
            "id": self.identifier,
            "pose": self.pose.to_dict(),
            "rays": self.n_rays,
            "max_extra_bounces": self.max_extra_bounces,
            "max_range_m": self.max_range,
            "frustum_half_angle_rad": self.frustum_half_angle,
            "source_level": self.source_level.tolist(),
        }


@dataclass
class Receiver:
    identifier: str
    pose: Pose

    def to_dict(self) -> dict:
        return {"id": self.identifier, "pose": self.pose.to_dict()}


@dataclass
class MeshInstance:
    """One placed copy of a mesh with a material binding.

    `scaled_mesh` is the local mesh with the instance's uniform scale
    applied; curvature is computed on it, so rigid pose changes never
    invalidate curvature tables. Areas are therefore world-space areas.
    """

    identifier: str
    mesh_id: str
    mesh: TriangleMesh
    material: MaterialSpec
    pose: Pose
    scale: float = 1.0
    scaled_mesh: TriangleMesh = field(init=False)

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ParseError(f"instance {self.identifier}: scale must be > 0")
        self.scaled_mesh = self.mesh.scaled(self.scale)

    def world_corners(self):
        v = self.pose.apply(self.scaled_mesh.vertices)
        f = self.scaled_mesh.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def to_dict(self) -> dict:
        return {
            "id": self.identifier,
            "mesh": self.mesh_id,
            "material": self.material.identifier,
            "pose": self.pose.to_dict(),
            "scale": self.scale,
            "triangles": self.scaled_mesh.n_triangles,
        }


@dataclass
class Scene:
    """World-space simulation input: geometry, sensors, medium, BVH."""

    instances: list[MeshInstance]
    emitters: list[Emitter]
    receivers: list[Receiver]
    frequencies: np.ndarray  # (F,) Hz, strictly increasing
    alpha_db_per_m: np.ndarray  # (F,) atmospheric attenuation, dB/m
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    diffraction_candidates_per_mesh: int = DEFAULT_DIFFRACTION_CANDIDATES_PER_MESH
    diffraction_max_incidence: float = DEFAULT_MAX_INCIDENCE
    revision: int = 0

    # derived world-space arrays, filled in __post_init__
    tri_v0: np.ndarray = field(init=False, repr=False)
    tri_v1: np.ndarray = field(init=False, repr=False)
    tri_v2: np.ndarray = field(init=False, repr=False)
    tri_normal: np.ndarray = field(init=False, repr=False)
    tri_area: np.ndarray = field(init=False, repr=False)
    tri_instance: np.ndarray = field(init=False, repr=False)
    instance_offsets: np.ndarray = field(init=False, repr=False)
    diameter: float = field(init=False, default=1.0)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        if self.frequencies.ndim != 1 or len(self.frequencies) < 1:
            raise InvalidFrequencyGrid("at least one frequency bin is required")
        if np.any(self.frequencies <= 0.0):
            raise InvalidFrequencyGrid("frequency bin centers must be positive")
        if np.any(np.diff(self.frequencies) <= 0.0):
            raise InvalidFrequencyGrid("frequency bin centers must be strictly increasing")
        self.alpha_db_per_m = np.asarray(self.alpha_db_per_m, dtype=np.float64)
        if np.any(self.alpha_db_per_m < 0.0):
            raise ParseError("atmospheric attenuation must be >= 0 dB/m")
        if not self.speed_of_sound > 0.0:
            raise ParseError("speed of sound must be > 0")
        seen: set[str] = set()
        for group in (self.instances, self.emitters, self.receivers):
            for item in group:
                if item.identifier in seen:
                    raise ParseError(f"duplicate entity id {item.identifier!r}")
                seen.add(item.identifier)
        self._rebuild_world()
        self._curvature_cache: dict[str, object] = {}

    # -- geometry ---------------------------------------------------------

    def _rebuild_world(self):
        chunks = [inst.world_corners() for inst in self.instances]
        offsets = [0]
        for inst in self.instances:
            offsets.append(offsets[-1] + inst.scaled_mesh.n_triangles)
        self.instance_offsets = np.asarray(offsets, dtype=np.int64)
        if chunks:
            self.tri_v0 = np.ascontiguousarray(np.concatenate([c[0] for c in chunks]))
            self.tri_v1 = np.ascontiguousarray(np.concatenate([c[1] for c in chunks]))
            self.tri_v2 = np.ascontiguousarray(np.concatenate([c[2] for c in chunks]))
        else:
            self.tri_v0 = np.zeros((0, 3))
            self.tri_v1 = np.zeros((0, 3))
            self.tri_v2 = np.zeros((0, 3))
        cross = np.cross(self.tri_v1 - self.tri_v0, self.tri_v2 - self.tri_v0)
        double_area = np.linalg.norm(cross, axis=1)
        self.tri_area = 0.5 * double_area
        normals = np.zeros_like(cross)
        ok = double_area > 0.0
        normals[ok] = cross[ok] / double_area[ok, None]
        normals[~ok] = (0.0, 0.0, 1.0)
        self.tri_normal = np.ascontiguousarray(normals)
        self.tri_instance = np.ascontiguousarray(
            np.repeat(
                np.arange(len(self.instances), dtype=np.int32),
                [inst.scaled_mesh.n_triangles for inst in self.instances],
            )
        )
        self._bvh: BVH | None = None
        self.diameter = self._compute_diameter()

    @property
    def bvh(self) -> BVH | None:
        """Acceleration structure over world triangles, built on first use."""
        if self._bvh is None and len(self.tri_v0):
            self._bvh = build_bvh(self.tri_v0, self.tri_v1, self.tri_v2)
        return self._bvh

    def _compute_diameter(self) -> float:
        pts = [e.pose.position for e in self.emitters] + [r.pose.position for r in self.receivers]
        if len(self.tri_v0):
            pts += [
                self.tri_v0.min(axis=0), self.tri_v0.max(axis=0),
                self.tri_v1.min(axis=0), self.tri_v1.max(axis=0),
                self.tri_v2.min(axis=0), self.tri_v2.max(axis=0),
            ]
        if not pts:
            return 1.0
        stack = np.vstack(pts)
        span = float(np.linalg.norm(stack.max(axis=0) - stack.min(axis=0)))
        return span if span > 0.0 else 1.0

    @property
    def epsilon(self) -> float:
        """Self-intersection offset: scene-diameter relative, not absolute."""
        return SELF_INTERSECT_SCALE * self.diameter

    @property
    def n_triangles(self) -> int:
        return len(self.tri_v0)

    @property
    def n_bins(self) -> int:
        return len(self.frequencies)

    def degenerate_mask(self) -> np.ndarray:
        """World triangles too small to carry a reliable normal."""
        from .mesh import DEGENERATE_AREA

        return self.tri_area < DEGENERATE_AREA

    # -- entity lookup / posing -------------------------------------------

    def find_entity(self, entity_id: str):
        for group in (self.emitters, self.receivers, self.instances):
            for item in group:
                if item.identifier == entity_id:
                    return item
        raise UnknownEntity(f"no entity with id {entity_id!r}")

    def emitter(self, emitter_id: str) -> Emitter:
        for e in self.emitters:
            if e.identifier == emitter_id:
                return e
        raise UnknownEntity(f"no emitter with id {emitter_id!r}")

    def receiver(self, receiver_id: str) -> Receiver:
        for r in self.receivers:
            if r.identifier == receiver_id:
                return r
        raise UnknownEntity(f"no receiver with id {receiver_id!r}")

    def with_pose(self, entity_id: str, pose: Pose) -> "Scene":
        """New scene revision with one entity re-posed.

        Curvature tables carry over untouched: they are computed on local
        (scaled) mesh coordinates and rigid motion cannot change them.
        """
        entity = self.find_entity(entity_id)
        kwargs = dict(
            frequencies=self.frequencies,
            alpha_db_per_m=self.alpha_db_per_m,
            speed_of_sound=self.speed_of_sound,
            diffraction_candidates_per_mesh=self.diffraction_candidates_per_mesh,
            diffraction_max_incidence=self.diffraction_max_incidence,
            revision=self.revision + 1,
        )
        if isinstance(entity, Emitter):
            emitters = [replace(e, pose=pose) if e is entity else e for e in self.emitters]
            new = Scene(self.instances, emitters, self.receivers, **kwargs)
            new._bvh = self._bvh  # geometry untouched: share the structure
        elif isinstance(entity, Receiver):
            receivers = [replace(r, pose=pose) if r is entity else r for r in self.receivers]
            new = Scene(self.instances, self.emitters, receivers, **kwargs)
            new._bvh = self._bvh
        else:
            instances = [
                MeshInstance(i.identifier, i.mesh_id, i.mesh, i.material, pose, i.scale)
                if i is entity
                else i
                for i in self.instances
            ]
            new = Scene(instances, self.emitters, self.receivers, **kwargs)
            old = self.bvh
            if old is not None:
                # same topology, moved leaves: refit bounds instead of rebuilding
                refitted = BVH(
                    node_min=old.node_min.copy(), node_max=old.node_max.copy(),
                    node_left=old.node_left, node_count=old.node_count,
                    order=old.order, v0=new.tri_v0, v1=new.tri_v1, v2=new.tri_v2,
                )
                refitted.refit()
                new._bvh = refitted
        new._curvature_cache = dict(self._curvature_cache)
        return new

    def summary(self) -> dict:
        return {
            "revision": self.revision,
            "speed_of_sound": self.speed_of_sound,
            "frequency_bins_hz": self.frequencies.tolist(),
            "atmospheric_db_per_m": self.alpha_db_per_m.tolist(),
            "triangles": int(self.n_triangles),
            "diffraction_candidates_per_mesh": self.diffraction_candidates_per_mesh,
            "diffraction_max_incidence_rad": self.diffraction_max_incidence,
            "instances": [i.to_dict() for i in self.instances],
            "emitters": [e.to_dict() for e in self.emitters],
            "receivers": [r.to_dict() for r in self.receivers],
            "materials": [m.to_dict() for m in self._unique_materials()],
        }

    def _unique_materials(self) -> list[MaterialSpec]:
        seen = {}
        for inst in self.instances:
            seen.setdefault(inst.material.identifier, inst.material)
        return list(seen.values())


# -- config loading ---------------------------------------------------------


def build_scene(config, base_dir=None) -> Scene:
    """Assemble a Scene from a JSON document (dict, path, or file contents).

    The schema is documented in docs/scene_format.md. Mesh paths resolve
    relative to the config file's directory (or `base_dir`).
    """
    if isinstance(config, (str, Path)):
        path = Path(config)
        if base_dir is None:
            base_dir = path.parent
        try:
            config = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ParseError(f"scene file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(config, dict):
        raise ParseError("scene config must be a JSON object")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    freqs = np.asarray(config.get("frequency_bins_hz", []), dtype=np.float64)
    if freqs.ndim != 1 or len(freqs) < 1:
        raise InvalidFrequencyGrid("scene config needs a non-empty frequency_bins_hz list")
    if np.any(freqs <= 0.0) or np.any(np.diff(freqs) <= 0.0):
        raise InvalidFrequencyGrid("frequency_bins_hz must be positive and strictly increasing")
    n_bins = len(freqs)
    alpha = _per_bin(config.get("atmospheric_db_per_m", 0.0), n_bins, "atmospheric_db_per_m")

    materials: dict[str, MaterialSpec] = {}
    for m in config.get("materials", []):
        mat = MaterialSpec(
            identifier=m["id"],
            beta_smooth=_per_bin(m.get("beta_smooth_rad", 0.2), n_bins, "beta_smooth_rad"),
            beta_edge=_per_bin(m.get("beta_edge_rad", 1.0), n_bins, "beta_edge_rad"),
            k_smooth=_per_bin(m.get("k_smooth", 0.9), n_bins, "k_smooth"),
            k_edge=_per_bin(m.get("k_edge", 0.3), n_bins, "k_edge"),
            diffraction_coeff=_per_bin(m.get("diffraction_coeff", 0.1), n_bins, "diffraction_coeff"),
            curvature_scale=float(m.get("curvature_scale", 1.0)),
            curvature_saturation=float(m.get("curvature_saturation", 50.0)),
            area_ref=(None if m.get("area_ref_m2") is None else float(m["area_ref_m2"])),
        )
        materials[mat.identifier] = mat

    meshes: dict[str, TriangleMesh] = {}
    for entry in config.get("meshes", []):
        mesh_id = entry["id"]
        raw_path = Path(entry["path"])
        path = raw_path if raw_path.is_absolute() else base_dir / raw_path
        if not path.exists():
            raise MissingMesh(f"mesh {mesh_id!r}: file not found: {path}")
        meshes[mesh_id] = load_mesh(path, entry.get("format"))

    instances = []
    for entry in config.get("instances", []):
        mesh_id = entry["mesh"]
        if mesh_id not in meshes:
            raise MissingMesh(f"instance {entry.get('id')}: unknown mesh id {mesh_id!r}")
        mat_id = entry.get("material")
        if mat_id not in materials:
            raise UnknownMaterial(f"instance {entry.get('id')}: unknown material {mat_id!r}")
        instances.append(
            MeshInstance(
                identifier=entry["id"],
                mesh_id=mesh_id,
                mesh=meshes[mesh_id],
                material=materials[mat_id],
                pose=Pose.from_dict(entry.get("pose", {})),
                scale=float(entry.get("scale", 1.0)),
            )
        )

    emitters = []
    for entry in config.get("emitters", []):
        emitters.append(
            Emitter(
                identifier=entry["id"],
                pose=Pose.from_dict(entry.get("pose", {})),
                n_rays=int(entry.get("rays", 10000)),
                max_extra_bounces=int(entry.get("max_extra_bounces", 2)),
                max_range=float(entry.get("max_range_m", 50.0)),
                frustum_half_angle=float(entry.get("frustum_half_angle_rad", np.pi)),
                source_level=_per_bin(entry.get("source_level", 1.0), n_bins, "source_level"),
            )
        )

    receivers = [
        Receiver(identifier=entry["id"], pose=Pose.from_dict(entry.get("pose", {})))
        for entry in config.get("receivers", [])
    ]

    return Scene(
        instances=instances,
        emitters=emitters,
        receivers=receivers,
        frequencies=freqs,
        alpha_db_per_m=alpha,
        speed_of_sound=float(config.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
        diffraction_candidates_per_mesh=int(
            config.get("diffraction_candidates_per_mesh", DEFAULT_DIFFRACTION_CANDIDATES_PER_MESH)
        ),
        diffraction_max_incidence=float(
            config.get("diffraction_max_incidence_rad", DEFAULT_MAX_INCIDENCE)
        ),
    )
