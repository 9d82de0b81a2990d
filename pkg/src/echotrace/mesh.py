"""Triangle mesh container plus OBJ / binary-STL readers.

All quantities are SI: vertex coordinates in meters, areas in m^2.
Binary files are little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, ParseError

DEGENERATE_AREA = 1e-12  # m^2; triangles below this carry no reliable normal


@dataclass
class TriangleMesh:
    """Indexed triangle soup with derived per-triangle geometry.

    Normals follow the winding order of the face indices. Degenerate
    triangles (area < 1e-12 m^2) keep a placeholder +Z normal and are
    flagged so downstream stages can skip them.
    """

    vertices: np.ndarray  # (nv, 3) float64
    faces: np.ndarray  # (nt, 3) int32
    normals: np.ndarray = field(init=False)  # (nt, 3) unit, from winding
    areas: np.ndarray = field(init=False)  # (nt,)
    degenerate: np.ndarray = field(init=False)  # (nt,) bool
    boundary_vertex: np.ndarray = field(init=False)  # (nv,) bool

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ParseError("vertices must be (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ParseError("faces must be (n, 3)")
        if len(self.faces) == 0:
            raise EmptyMesh("mesh has zero triangles")
        nv = len(self.vertices)
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= nv:
            raise ParseError("face index out of range")
        if (
            (self.faces[:, 0] == self.faces[:, 1])
            | (self.faces[:, 1] == self.faces[:, 2])
            | (self.faces[:, 0] == self.faces[:, 2])
        ).any():
            raise ParseError("a triangle repeats a vertex index")
        self._derive()

    def _derive(self):
        v0 = self.vertices[self.faces[:, 0]]
        v1 = self.vertices[self.faces[:, 1]]
        v2 = self.vertices[self.faces[:, 2]]
        cross = np.cross(v1 - v0, v2 - v0)
        double_area = np.linalg.norm(cross, axis=1)
        self.areas = 0.5 * double_area
        self.degenerate = self.areas < DEGENERATE_AREA
        normals = np.zeros_like(cross)
        ok = ~self.degenerate
        normals[ok] = cross[ok] / double_area[ok, None]
        normals[self.degenerate] = (0.0, 0.0, 1.0)
        self.normals = normals
        self.boundary_vertex = self._find_boundary_vertices()

    def _find_boundary_vertices(self) -> np.ndarray:
        # an edge belonging to exactly one triangle is a boundary edge
        edges = np.concatenate(
            [self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]
        )
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        flags = np.zeros(len(self.vertices), dtype=bool)
        rim = uniq[counts == 1]
        flags[rim.ravel()] = True
        return flags

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.faces)

    def total_area(self) -> float:
        return float(self.areas.sum())

    def triangle_corners(self):
        """(v0, v1, v2) arrays, one row per triangle."""
        return (
            self.vertices[self.faces[:, 0]],
            self.vertices[self.faces[:, 1]],
            self.vertices[self.faces[:, 2]],
        )

    def scaled(self, scale: float) -> "TriangleMesh":
        """Uniformly scaled copy (areas and curvature change with scale)."""
        if scale == 1.0:
            return self
        return TriangleMesh(self.vertices * float(scale), self.faces.copy())


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an OBJ or binary STL file into a TriangleMesh.

    `format` is "obj" or "stl"; when omitted it is taken from the file
    extension. Raises ParseError on malformed content and EmptyMesh when
    no triangles survive parsing.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"mesh file not found: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "stl":
        return _load_stl_binary(path)
    raise ParseError(f"unsupported mesh format: {fmt!r} (expected obj or stl)")


def _load_obj(path: Path) -> TriangleMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text OBJ file ({exc})") from exc
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"{path}:{ln}: vertex needs 3 coordinates")
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: bad vertex coordinate") from exc
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError(f"{path}:{ln}: face needs at least 3 vertices")
            try:
                idx = [_obj_index(p, len(vertices)) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: bad face index") from exc
            # fan-triangulate polygons
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # vn / vt / usemtl / o / g / s are ignored
    if not faces:
        raise EmptyMesh(f"{path}: no faces")
    return TriangleMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int32))


def _obj_index(token: str, n_vertices: int) -> int:
    raw = token.split("/")[0]
    i = int(raw)
    if i < 0:
        i = n_vertices + i
    else:
        i = i - 1
    if i < 0 or i >= n_vertices:
        raise ValueError(f"vertex index {raw} out of range")
    return i


def _load_stl_binary(path: Path) -> TriangleMesh:
    blob = path.read_bytes()
    if len(blob) < 84:
        raise ParseError(f"{path}: truncated STL header")
    if blob[:5] == b"solid" and b"facet" in blob[:200]:
        raise ParseError(f"{path}: ASCII STL is not supported, convert to binary")
    (count,) = struct.unpack_from("<I", blob, 80)
    expected = 84 + count * 50
    if len(blob) < expected:
        raise ParseError(f"{path}: STL claims {count} triangles but file is short")
    if count == 0:
        raise EmptyMesh(f"{path}: STL contains zero triangles")
    raw = np.frombuffer(blob, dtype=np.uint8, count=count * 50, offset=84)
    rec = raw.reshape(count, 50)
    tri = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    # weld exactly-equal corners so connectivity (boundary detection) works
    flat = tri.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(count, 3).astype(np.int32)
    keep = (
        (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    )
    faces = faces[keep]
    if len(faces) == 0:
        raise EmptyMesh(f"{path}: all STL triangles were degenerate")
    return TriangleMesh(uniq, faces)


def write_obj(path, mesh: TriangleMesh) -> None:
    """Write a mesh as ASCII OBJ (1-based indices)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_stl_binary(path, mesh: TriangleMesh) -> None:
    """Write a mesh as binary STL (little-endian, 80-byte blank header)."""
    v0, v1, v2 = mesh.triangle_corners()
    nt = mesh.n_triangles
    out = bytearray(struct.pack("<80xI", nt))
    for i in range(nt):
        out += struct.pack("<3f", *mesh.normals[i].astype(np.float32))
        out += struct.pack("<3f", *v0[i].astype(np.float32))
        out += struct.pack("<3f", *v1[i].astype(np.float32))
        out += struct.pack("<3f", *v2[i].astype(np.float32))
        out += struct.pack("<H", 0)
    Path(path).write_bytes(bytes(out))
