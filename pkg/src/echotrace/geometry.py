"""Small vector / quaternion helpers shared by scene and tracer code.

Quaternions are stored as (w, x, y, z) float64 arrays and must be unit
norm. Poses are rigid: rotation followed by translation, no scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9
UNIT_NORM_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by `angle` radians about `axis`."""
    axis = normalize(np.asarray(axis, dtype=np.float64))
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    w0, x0, y0, z0 = q
    w1, x1, y1, z1 = r
    return np.array(
        [
            w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
            w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
            w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
            w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate one vector or an (N, 3) batch by unit quaternion q."""
    v = np.asarray(v, dtype=np.float64)
    w = q[0]
    u = q[1:]
    single = v.ndim == 1
    pts = np.atleast_2d(v)
    # v' = v + 2 w (u x v) + 2 u x (u x v)
    uv = np.cross(u, pts)
    out = pts + 2.0 * w * uv + 2.0 * np.cross(u, uv)
    return out[0] if single else out


@dataclass(frozen=True)
class Pose:
    """Rigid placement: position in meters plus a unit quaternion (w,x,y,z)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "orientation", np.asarray(self.orientation, dtype=np.float64).reshape(4)
        )
        norm = np.linalg.norm(self.orientation)
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm!r} deviates from 1 by more than {QUAT_NORM_TOL}")

    def apply(self, points: np.ndarray) -> np.ndarray:
        """World position(s) of local point(s)."""
        return quat_rotate(self.orientation, points) + self.position

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vector(s) into the world frame (no translation)."""
        return quat_rotate(self.orientation, vectors)

    def inverse(self) -> "Pose":
        qinv = quat_conjugate(self.orientation)
        return Pose(position=-quat_rotate(qinv, self.position), orientation=qinv)

    def to_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "orientation_wxyz": [float(x) for x in self.orientation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        pos = d.get("position", [0.0, 0.0, 0.0])
        if "orientation_wxyz" in d:
            quat = np.asarray(d["orientation_wxyz"], dtype=np.float64)
        elif "rotation_axis_angle" in d:
            ax_ang = d["rotation_axis_angle"]
            quat = quat_from_axis_angle(ax_ang[:3], float(ax_ang[3]))
        else:
            quat = np.array([1.0, 0.0, 0.0, 0.0])
        return Pose(position=np.asarray(pos, dtype=np.float64), orientation=quat)


IDENTITY_POSE = Pose()
