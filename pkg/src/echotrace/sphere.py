"""Recursive zonal equal-area partitioning of the unit sphere.

Emission directions are the region centers of a partition of S^2 into N
regions of equal area: two polar caps plus a stack of collars, each collar
split into equal-longitude cells. Every region has area 4*pi/N, so rays
carry equal solid angles. The construction is deterministic in N.
"""

from __future__ import annotations

import numpy as np


def equal_area_directions(n: int) -> np.ndarray:
    """Return (n, 3) unit vectors, one per region of the N-zone partition.

    n == 1 gives the +Z axis; n == 2 gives the two poles. Larger n places
    cap representatives at the poles and collar representatives at the
    angular center of each collar cell.
    """
    if n < 1:
        raise ValueError("ray count must be >= 1")
    if n == 1:
        return np.array([[0.0, 0.0, 1.0]])
    if n == 2:
        return np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])

    # polar cap colatitude: cap area 4*pi/n  =>  cos(theta_c) = 1 - 2/n
    theta_c = np.arccos(1.0 - 2.0 / n)
    # ideal collar height ~ sqrt of region area
    delta_ideal = np.sqrt(4.0 * np.pi / n)
    n_collars = max(1, int(round((np.pi - 2.0 * theta_c) / delta_ideal)))
    delta_fit = (np.pi - 2.0 * theta_c) / n_collars

    # ideal (real-valued) region count per collar, then round while
    # pushing the accumulated discrepancy into the next collar so the
    # total stays exactly n - 2
    edges = theta_c + delta_fit * np.arange(n_collars + 1)
    cap_area = 2.0 * np.pi * (1.0 - np.cos(edges))
    ideal_counts = (cap_area[1:] - cap_area[:-1]) / (4.0 * np.pi / n)
    counts = np.zeros(n_collars, dtype=np.int64)
    leftover = 0.0
    for i, y in enumerate(ideal_counts):
        m = int(round(y + leftover))
        leftover += y - m
        counts[i] = m

    dirs = [np.array([0.0, 0.0, 1.0])]
    for i in range(n_collars):
        m = counts[i]
        if m <= 0:
            continue
        colat = 0.5 * (edges[i] + edges[i + 1])
        z = np.cos(colat)
        rho = np.sin(colat)
        # stagger alternate collars by half a cell to avoid seams
        lon0 = (np.pi / m) if (i % 2) else 0.0
        lon = lon0 + 2.0 * np.pi * (np.arange(m) + 0.5) / m
        ring = np.column_stack([rho * np.cos(lon), rho * np.sin(lon), np.full(m, z)])
        dirs.append(ring)
    dirs.append(np.array([0.0, 0.0, -1.0]))
    out = np.vstack([d if d.ndim == 2 else d[None, :] for d in dirs])
    assert out.shape == (n, 3), f"partition produced {out.shape[0]} regions for n={n}"
    return out
