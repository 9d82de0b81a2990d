"""Compiled hot-path kernels: intersection, traversal, tracing, magnitudes.

Everything here is scalar float64 math under njit so results are bitwise
reproducible across worker counts and match a straightforward sequential
reimplementation of the same formula order (libm calls, no fastmath, no
FMA contraction). Parallel loops only ever write to disjoint slots.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

KERNEL_OPTS = dict(cache=True, fastmath=False, error_model="numpy")


def set_worker_count(n: int) -> None:
    numba.set_num_threads(max(1, int(n)))


def worker_count() -> int:
    return numba.get_num_threads()


@njit(inline="always", **KERNEL_OPTS)
def _ray_triangle(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moller-Trumbore; returns parametric t along the unit ray or inf."""
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return math.inf
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return math.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return math.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > 0.0:
        return t
    return math.inf


@njit(inline="always", **KERNEL_OPTS)
def _slab_hit(ox, oy, oz, dx, dy, dz, bminx, bminy, bminz, bmaxx, bmaxy, bmaxz, t_hi):
    # explicit parallel-axis handling avoids 0 * inf = NaN culling real hits
    tmin = -math.inf
    tmax = math.inf
    if dx == 0.0:
        if ox < bminx or ox > bmaxx:
            return False
    else:
        inv = 1.0 / dx
        t0 = (bminx - ox) * inv
        t1 = (bmaxx - ox) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if dy == 0.0:
        if oy < bminy or oy > bmaxy:
            return False
    else:
        inv = 1.0 / dy
        t0 = (bminy - oy) * inv
        t1 = (bmaxy - oy) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    if dz == 0.0:
        if oz < bminz or oz > bmaxz:
            return False
    else:
        inv = 1.0 / dz
        t0 = (bminz - oz) * inv
        t1 = (bmaxz - oz) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
    return tmax >= tmin and tmin <= t_hi and tmax >= 0.0


@njit(**KERNEL_OPTS)
def brute_closest(ox, oy, oz, dx, dy, dz, v0, v1, v2):
    """Reference all-triangles nearest hit; ascending ids so ties keep the lowest."""
    best_t = math.inf
    best_i = -1
    for i in range(v0.shape[0]):
        t = _ray_triangle(
            ox, oy, oz, dx, dy, dz,
            v0[i, 0], v0[i, 1], v0[i, 2],
            v1[i, 0], v1[i, 1], v1[i, 2],
            v2[i, 0], v2[i, 1], v2[i, 2],
        )
        if t < best_t:
            best_t = t
            best_i = i
    return best_t, best_i


@njit(inline="always", **KERNEL_OPTS)
def _bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax, left, count, order, v0, v1, v2):
    best_t = math.inf
    best_i = -1
    stack = np.empty(128, dtype=np.int32)
    top = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(
            ox, oy, oz, dx, dy, dz,
            nmin[node, 0], nmin[node, 1], nmin[node, 2],
            nmax[node, 0], nmax[node, 1], nmax[node, 2],
            best_t,
        ):
            continue
        c = count[node]
        if c > 0:
            start = left[node]
            for k in range(start, start + c):
                i = order[k]
                t = _ray_triangle(
                    ox, oy, oz, dx, dy, dz,
                    v0[i, 0], v0[i, 1], v0[i, 2],
                    v1[i, 0], v1[i, 1], v1[i, 2],
                    v2[i, 0], v2[i, 1], v2[i, 2],
                )
                # tie-break on equal distance: lower triangle id wins
                if t < best_t or (t == best_t and i < best_i):
                    best_t = t
                    best_i = i
        else:
            stack[top] = left[node]
            stack[top + 1] = left[node] + 1
            top += 2
    return best_t, best_i


@njit(inline="always", **KERNEL_OPTS)
def _bvh_any(ox, oy, oz, dx, dy, dz, t_lo, t_hi, nmin, nmax, left, count, order, v0, v1, v2):
    """True if any triangle is hit strictly inside (t_lo, t_hi)."""
    stack = np.empty(128, dtype=np.int32)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(
            ox, oy, oz, dx, dy, dz,
            nmin[node, 0], nmin[node, 1], nmin[node, 2],
            nmax[node, 0], nmax[node, 1], nmax[node, 2],
            t_hi,
        ):
            continue
        c = count[node]
        if c > 0:
            start = left[node]
            for k in range(start, start + c):
                i = order[k]
                t = _ray_triangle(
                    ox, oy, oz, dx, dy, dz,
                    v0[i, 0], v0[i, 1], v0[i, 2],
                    v1[i, 0], v1[i, 1], v1[i, 2],
                    v2[i, 0], v2[i, 1], v2[i, 2],
                )
                if t > t_lo and t < t_hi:
                    return True
        else:
            stack[top] = left[node]
            stack[top + 1] = left[node] + 1
            top += 2
    return False


@njit(inline="always", **KERNEL_OPTS)
def _segment_blocked(ax, ay, az, bx, by, bz, eps, nmin, nmax, left, count, order, v0, v1, v2):
    """Open-segment occlusion test with endpoints retracted by eps."""
    vx = bx - ax
    vy = by - ay
    vz = bz - az
    length = math.sqrt(vx * vx + vy * vy + vz * vz)
    if length <= 2.0 * eps:
        return False
    dx = vx / length
    dy = vy / length
    dz = vz / length
    return _bvh_any(
        ax, ay, az, dx, dy, dz, eps, length - eps, nmin, nmax, left, count, order, v0, v1, v2
    )


@njit(parallel=True, **KERNEL_OPTS)
def trace_kernel(
    origin,
    dirs,
    max_records,
    max_dist,
    eps,
    nmin,
    nmax,
    left,
    count,
    order,
    v0,
    v1,
    v2,
    tri_normal,
    out_count,
    out_tri,
    out_pos,
    out_rtot,
    out_refl,
    out_occ,
):
    """Specular bounce walk per ray. Slot (ray, bounce) writes are disjoint."""
    n_rays = dirs.shape[0]
    for ri in prange(n_rays):
        ox = origin[0]
        oy = origin[1]
        oz = origin[2]
        dx = dirs[ri, 0]
        dy = dirs[ri, 1]
        dz = dirs[ri, 2]
        r_total = 0.0
        written = 0
        for j in range(max_records):
            t, tri = _bvh_closest(ox, oy, oz, dx, dy, dz, nmin, nmax, left, count, order, v0, v1, v2)
            if tri < 0:
                break
            if j == 0:
                r_total = t
            else:
                r_total = r_total + t
            if r_total > max_dist:
                break
            hx = ox + t * dx
            hy = oy + t * dy
            hz = oz + t * dz
            nx = tri_normal[tri, 0]
            ny = tri_normal[tri, 1]
            nz = tri_normal[tri, 2]
            dot = dx * nx + dy * ny + dz * nz
            rx = dx - 2.0 * dot * nx
            ry = dy - 2.0 * dot * ny
            rz = dz - 2.0 * dot * nz
            out_tri[ri, j] = tri
            out_pos[ri, j, 0] = hx
            out_pos[ri, j, 1] = hy
            out_pos[ri, j, 2] = hz
            out_rtot[ri, j] = r_total
            out_refl[ri, j, 0] = rx
            out_refl[ri, j, 1] = ry
            out_refl[ri, j, 2] = rz
            out_occ[ri, j] = _segment_blocked(
                hx, hy, hz, ox, oy, oz, eps, nmin, nmax, left, count, order, v0, v1, v2
            )
            written = j + 1
            side = 1.0 if (rx * nx + ry * ny + rz * nz) >= 0.0 else -1.0
            ox = hx + side * eps * nx
            oy = hy + side * eps * ny
            oz = hz + side * eps * nz
            dx = rx
            dy = ry
            dz = rz
        out_count[ri] = written


@njit(parallel=True, **KERNEL_OPTS)
def los_kernel(a_pts, b_pts, eps, nmin, nmax, left, count, order, v0, v1, v2, out_blocked):
    for i in prange(a_pts.shape[0]):
        out_blocked[i] = _segment_blocked(
            a_pts[i, 0], a_pts[i, 1], a_pts[i, 2],
            b_pts[i, 0], b_pts[i, 1], b_pts[i, 2],
            eps, nmin, nmax, left, count, order, v0, v1, v2,
        )


@njit(parallel=True, **KERNEL_OPTS)
def specular_magnitude_kernel(
    pos,
    rtot,
    refl,
    tri,
    rcv_pos,
    alpha_db,
    beta,
    refl_k,
    eps,
    nmin,
    nmax,
    left,
    count,
    order,
    v0,
    v1,
    v2,
    out_visible,
    out_r,
    out_mag,
):
    """Per (reflection point, receiver): path length, lobe deviation, M(f).

    M(f) = L_geo * L_atm(f) * I(f) with L_geo = 1/r^2,
    L_atm = 10^(-alpha*r/20) and I = exp(-gamma^2 / (2 beta^2)) * k.
    """
    n_pts = pos.shape[0]
    n_rcv = rcv_pos.shape[0]
    n_bins = alpha_db.shape[0]
    for p in prange(n_pts):
        hx = pos[p, 0]
        hy = pos[p, 1]
        hz = pos[p, 2]
        ti = tri[p]
        for m in range(n_rcv):
            dxr = rcv_pos[m, 0] - hx
            dyr = rcv_pos[m, 1] - hy
            dzr = rcv_pos[m, 2] - hz
            leg = math.sqrt(dxr * dxr + dyr * dyr + dzr * dzr)
            blocked = _segment_blocked(
                hx, hy, hz, rcv_pos[m, 0], rcv_pos[m, 1], rcv_pos[m, 2],
                eps, nmin, nmax, left, count, order, v0, v1, v2,
            )
            if blocked or leg == 0.0:
                out_visible[p, m] = False
                continue
            out_visible[p, m] = True
            r = rtot[p] + leg
            out_r[p, m] = r
            num = refl[p, 0] * dxr + refl[p, 1] * dyr + refl[p, 2] * dzr
            cosg = num / leg
            if cosg > 1.0:
                cosg = 1.0
            elif cosg < -1.0:
                cosg = -1.0
            gamma = math.acos(cosg)
            geo = 1.0 / (r * r)
            for f in range(n_bins):
                atm = 10.0 ** (-(alpha_db[f] * r) / 20.0)
                b = beta[ti, f]
                intensity = math.exp(-(gamma * gamma) / (2.0 * (b * b))) * refl_k[ti, f]
                out_mag[p, m, f] = (geo * atm) * intensity


@njit(parallel=True, **KERNEL_OPTS)
def diffraction_magnitude_kernel(
    pts,
    src,
    rcv_pos,
    alpha_db,
    coeff,
    eps,
    nmin,
    nmax,
    left,
    count,
    order,
    v0,
    v1,
    v2,
    out_visible,
    out_r,
    out_mag,
):
    """Per (diffraction point, receiver): omnidirectional secondary source.

    M(f) = L_geo * L_atm(f) * I_d(f); r = |src -> point| + |point -> receiver|.
    """
    n_pts = pts.shape[0]
    n_rcv = rcv_pos.shape[0]
    n_bins = alpha_db.shape[0]
    for p in prange(n_pts):
        px = pts[p, 0]
        py = pts[p, 1]
        pz = pts[p, 2]
        sx = src[0] - px
        sy = src[1] - py
        sz = src[2] - pz
        leg_src = math.sqrt(sx * sx + sy * sy + sz * sz)
        for m in range(n_rcv):
            dxr = rcv_pos[m, 0] - px
            dyr = rcv_pos[m, 1] - py
            dzr = rcv_pos[m, 2] - pz
            leg = math.sqrt(dxr * dxr + dyr * dyr + dzr * dzr)
            blocked = _segment_blocked(
                px, py, pz, rcv_pos[m, 0], rcv_pos[m, 1], rcv_pos[m, 2],
                eps, nmin, nmax, left, count, order, v0, v1, v2,
            )
            if blocked or leg == 0.0:
                out_visible[p, m] = False
                continue
            out_visible[p, m] = True
            r = leg_src + leg
            out_r[p, m] = r
            geo = 1.0 / (r * r)
            for f in range(n_bins):
                atm = 10.0 ** (-(alpha_db[f] * r) / 20.0)
                out_mag[p, m, f] = (geo * atm) * coeff[p, f]
