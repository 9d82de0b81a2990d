"""Procedural meshes used by experiments and tests: spheres, plates, boxes."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosphere(radius: float = 1.0, subdivisions: int = 3) -> TriangleMesh:
    """Geodesic sphere from a subdivided icosahedron (20 * 4^n triangles)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                midpoint_cache[key] = len(verts)
                verts.append(tuple(m))
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts, dtype=np.float64) * radius
    return TriangleMesh(v, np.asarray(faces, dtype=np.int32))


def plate(width: float, height: float, nx: int = 1, ny: int = 1) -> TriangleMesh:
    """Flat rectangular plate in the XY plane, centered on the origin, +Z normal."""
    xs = np.linspace(-width / 2.0, width / 2.0, nx + 1)
    ys = np.linspace(-height / 2.0, height / 2.0, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int32))


def box(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned closed box (12 triangles), outward normals."""
    sx, sy, sz = (np.broadcast_to(np.asarray(size, dtype=np.float64), (3,)) / 2.0)
    cx, cy, cz = center
    v = np.array(
        [
            (cx - sx, cy - sy, cz - sz), (cx + sx, cy - sy, cz - sz),
            (cx + sx, cy + sy, cz - sz), (cx - sx, cy + sy, cz - sz),
            (cx - sx, cy - sy, cz + sz), (cx + sx, cy - sy, cz + sz),
            (cx + sx, cy + sy, cz + sz), (cx - sx, cy + sy, cz + sz),
        ]
    )
    quads = [
        (0, 3, 2, 1),  # -z
        (4, 5, 6, 7),  # +z
        (0, 1, 5, 4),  # -y
        (2, 3, 7, 6),  # +y
        (1, 2, 6, 5),  # +x
        (3, 0, 4, 7),  # -x
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.asarray(faces, dtype=np.int32))


def beveled_box(size: float = 1.0, bevel: float = 0.05, n: int = 4) -> TriangleMesh:
    """Closed cube with chamfered edges and n-by-n subdivided faces.

    Face interiors are flat grids; every edge is replaced by a 45-degree
    chamfer strip, and corners by single triangles. Shared borders weld by
    exact coordinate equality.
    """
    s = size / 2.0
    f = s - bevel  # face inset
    verts: list[tuple[float, float, float]] = []
    index: dict[tuple[float, float, float], int] = {}
    faces: list[tuple[int, int, int]] = []

    def vid(p):
        key = (float(p[0]), float(p[1]), float(p[2]))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    def add_quad(a, b, c, d):
        faces.append((vid(a), vid(b), vid(c)))
        faces.append((vid(a), vid(c), vid(d)))

    def lift(axis, level, u, v):
        p = [0.0, 0.0, 0.0]
        p[axis] = level
        p[(axis + 1) % 3] = u
        p[(axis + 2) % 3] = v
        return tuple(p)

    ticks = np.linspace(-f, f, n + 1)
    for axis in range(3):
        for sign in (1.0, -1.0):
            level = sign * s
            for i in range(n):
                for j in range(n):
                    a = lift(axis, level, ticks[i], ticks[j])
                    b = lift(axis, level, ticks[i + 1], ticks[j])
                    c = lift(axis, level, ticks[i + 1], ticks[j + 1])
                    d = lift(axis, level, ticks[i], ticks[j + 1])
                    if sign > 0:
                        add_quad(a, b, c, d)
                    else:
                        add_quad(a, d, c, b)
    # chamfer strips along the 12 edges
    for axis in range(3):  # the edge direction
        ua = (axis + 1) % 3
        va = (axis + 2) % 3
        for su in (1.0, -1.0):
            for sv in (1.0, -1.0):
                rim_u = []
                rim_v = []
                for t in ticks:
                    pu = [0.0, 0.0, 0.0]
                    pu[axis] = t
                    pu[ua] = su * s
                    pu[va] = sv * f
                    rim_u.append(tuple(pu))
                    pv = [0.0, 0.0, 0.0]
                    pv[axis] = t
                    pv[ua] = su * f
                    pv[va] = sv * s
                    rim_v.append(tuple(pv))
                for i in range(n):
                    a, b = rim_u[i], rim_u[i + 1]
                    c, d = rim_v[i + 1], rim_v[i]
                    if su * sv > 0:
                        add_quad(a, b, c, d)
                    else:
                        add_quad(a, d, c, b)
    # corner triangles
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                a = (sx * s, sy * f, sz * f)
                b = (sx * f, sy * s, sz * f)
                c = (sx * f, sy * f, sz * s)
                if sx * sy * sz > 0:
                    faces.append((vid(a), vid(b), vid(c)))
                else:
                    faces.append((vid(a), vid(c), vid(b)))
    return TriangleMesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32))


def plate_with_wedge(
    plate_size: float = 1.0,
    wedge_height: float = 0.2,
    n: int = 8,
) -> TriangleMesh:
    """Flat plate with a sharp triangular ridge along its center line.

    The ridge crest is the only high-curvature feature, which makes the
    mesh a handy probe for edge-seeking curvature metrics.
    """
    half = plate_size / 2.0
    xs = np.linspace(-half, half, n + 1)
    verts = []
    faces = []

    def vid(p):
        verts.append(p)
        return len(verts) - 1

    # two inclined strips meeting at the crest, plus flat aprons either side
    y_base = plate_size / 6.0
    rows = [
        (-half, 0.0),
        (-y_base, 0.0),
        (0.0, wedge_height),
        (y_base, 0.0),
        (half, 0.0),
    ]
    grid = [[vid((x, y, z)) for (y, z) in rows] for x in xs]
    for i in range(n):
        for j in range(4):
            a, b = grid[i][j], grid[i + 1][j]
            c, d = grid[i + 1][j + 1], grid[i][j + 1]
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriangleMesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32))


def bumpy_plate(
    width: float,
    height: float,
    n_bumps: int,
    bump_radius: float,
    seed: int = 0,
    base_subdiv: int = 8,
    bump_subdiv: int = 1,
) -> TriangleMesh:
    """Plate strewn with hemispherical bumps on its +Z face.

    Bump centers are drawn uniformly (seeded) with margin so hemispheres
    stay inside the plate outline; overlaps are allowed, as on a pebble bed.
    """
    base = plate(width, height, base_subdiv, base_subdiv)
    verts = [base.vertices]
    faces = [base.faces]
    offset = base.n_vertices
    rng = np.random.default_rng(seed)
    hemi = _hemisphere(bump_radius, bump_subdiv)
    for _ in range(n_bumps):
        cx = rng.uniform(-width / 2 + bump_radius, width / 2 - bump_radius)
        cy = rng.uniform(-height / 2 + bump_radius, height / 2 - bump_radius)
        v = hemi.vertices + np.array([cx, cy, 0.0])
        verts.append(v)
        faces.append(hemi.faces + offset)
        offset += hemi.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))


def _hemisphere(radius: float, subdivisions: int) -> TriangleMesh:
    sphere = icosphere(radius, subdivisions)
    centroids = sphere.vertices[sphere.faces].mean(axis=1)
    keep = centroids[:, 2] > 0.0
    faces = sphere.faces[keep]
    used = np.unique(faces)
    remap = np.full(sphere.n_vertices, -1, dtype=np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    v = sphere.vertices[used].copy()
    v[:, 2] = np.maximum(v[:, 2], 0.0)  # clamp the cut rim onto the plate
    return TriangleMesh(v, remap[faces])
