"""Standalone codec for the echotrace wire protocol (docs/protocol.md).

Implements framing, the point-cloud payload, and the impulse-response
payload from the protocol document alone; nothing here imports the
server implementation. Little-endian throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"STUE"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<4sHHQ")

MSG_HELLO = 0x0001
MSG_PING = 0x0002
MSG_GET_CONFIG = 0x0003
MSG_SET_POSE = 0x0004
MSG_SIMULATE = 0x0005
MSG_SYNTHESIZE = 0x0006
RESP_BIT = 0x8000
MSG_ERROR = 0xFFFF

ERROR_NAMES = {
    1: "BAD_MAGIC",
    2: "VERSION_MISMATCH",
    3: "UNKNOWN_ENTITY",
    4: "SIM_FAILED",
    5: "BAD_REQUEST",
    6: "NO_SESSION",
}

KIND_SPECULAR = 0
KIND_DIFFRACTION = 1
KIND_PASSIVE = 2

_PC_HEADER = struct.Struct("<4sHHIIIIIIQ")
_IR_HEADER = struct.Struct("<4sHHdQQ")


def encode_frame(msg_type: int, payload: bytes = b"", version: int = PROTOCOL_VERSION) -> bytes:
    return HEADER.pack(MAGIC, version, msg_type, len(payload)) + payload


def split_frames(buffer: bytearray):
    """Pop complete frames off the front of a receive buffer.

    Yields (version, msg_type, payload) tuples; leaves partial data in
    place. The client only ever talks to a well-behaved server, so no
    resync scanning is needed here.
    """
    frames = []
    while len(buffer) >= HEADER.size:
        magic, version, msg_type, length = HEADER.unpack_from(buffer, 0)
        if magic != MAGIC:
            raise ProtocolError(f"bad magic from server: {magic!r}")
        if len(buffer) < HEADER.size + length:
            break
        payload = bytes(buffer[HEADER.size : HEADER.size + length])
        del buffer[: HEADER.size + length]
        frames.append((version, msg_type, payload))
    return frames


class ProtocolError(Exception):
    """Malformed bytes from the server."""


class ServerError(Exception):
    """An ERROR frame, surfaced verbatim."""

    def __init__(self, code: int, message: str):
        self.code = code
        self.name = ERROR_NAMES.get(code, f"code {code}")
        super().__init__(f"{self.name}: {message}")


def decode_error(payload: bytes) -> ServerError:
    (code,) = struct.unpack_from("<H", payload, 0)
    return ServerError(code, payload[2:].decode(errors="replace"))


@dataclass
class PointCloud:
    """Decoded SIMULATE payload; field layout mirrors the wire exactly."""

    scene_revision: int
    n_specular_points: int
    n_diffraction_points: int
    n_sources: int
    n_receivers: int
    n_bins: int
    kind: np.ndarray  # (n,) u8
    source: np.ndarray  # (n,) u32
    receiver: np.ndarray  # (n,) u32
    position: np.ndarray  # (n, 3) f64
    path_length: np.ndarray  # (n,) f64
    index: np.ndarray  # (n,) u32
    magnitude: np.ndarray  # (n, F) f32

    def __len__(self) -> int:
        return len(self.kind)

    def pair_rows(self, source: int, receiver: int) -> np.ndarray:
        return np.nonzero((self.source == source) & (self.receiver == receiver))[0]


def record_dtype(n_bins: int) -> np.dtype:
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


def decode_pointcloud(blob: bytes) -> PointCloud:
    if len(blob) < _PC_HEADER.size:
        raise ProtocolError("point cloud shorter than its header")
    magic, version, _, n_spec, n_diff, s, r, f, count, revision = _PC_HEADER.unpack_from(blob, 0)
    if magic != b"STPC":
        raise ProtocolError(f"bad point-cloud magic {magic!r}")
    if version != 1:
        raise ProtocolError(f"unsupported point-cloud version {version}")
    dtype = record_dtype(f)
    expected = _PC_HEADER.size + count * dtype.itemsize
    if len(blob) != expected:
        raise ProtocolError(f"point cloud should be {expected} bytes, got {len(blob)}")
    rec = np.frombuffer(blob, dtype=dtype, count=count, offset=_PC_HEADER.size)
    return PointCloud(
        scene_revision=revision,
        n_specular_points=n_spec,
        n_diffraction_points=n_diff,
        n_sources=s,
        n_receivers=r,
        n_bins=f,
        kind=rec["kind"].copy(),
        source=rec["source"].copy(),
        receiver=rec["receiver"].copy(),
        position=rec["position"].copy(),
        path_length=rec["path_length"].copy(),
        index=rec["index"].copy(),
        magnitude=rec["magnitude"].copy(),
    )


def encode_pointcloud(pc: PointCloud) -> bytes:
    """Inverse of decode_pointcloud; round-trips payload bytes exactly."""
    rec = np.zeros(len(pc), dtype=record_dtype(pc.n_bins))
    rec["kind"] = pc.kind
    rec["source"] = pc.source
    rec["receiver"] = pc.receiver
    rec["position"] = pc.position
    rec["path_length"] = pc.path_length
    rec["index"] = pc.index
    rec["magnitude"] = pc.magnitude
    header = _PC_HEADER.pack(
        b"STPC", 1, 0, pc.n_specular_points, pc.n_diffraction_points,
        pc.n_sources, pc.n_receivers, pc.n_bins, len(pc), pc.scene_revision,
    )
    return header + rec.tobytes()


def decode_impulse(payload: bytes) -> tuple[np.ndarray, float, int]:
    magic, version, _, fs, n_fft, count = _IR_HEADER.unpack_from(payload, 0)
    if magic != b"STIR" or version != 1:
        raise ProtocolError("bad impulse-response payload header")
    samples = np.frombuffer(payload, dtype="<f8", count=count, offset=_IR_HEADER.size).copy()
    return samples, fs, n_fft
