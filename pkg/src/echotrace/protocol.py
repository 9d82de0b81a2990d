"""Wire protocol for the TCP service. docs/protocol.md is the normative text.

Frame: 4-byte magic "STUE" | u16 protocol version | u16 message type |
u64 payload length | payload. All integers little-endian, floats IEEE-754.
One request maps to exactly one response on the same connection, in order.
A parser losing framing scans forward to the next magic instead of
disconnecting.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"STUE"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<4sHHQ")
MAX_PAYLOAD = 256 * 1024 * 1024

# request types
MSG_HELLO = 0x0001
MSG_PING = 0x0002
MSG_GET_CONFIG = 0x0003
MSG_SET_POSE = 0x0004
MSG_SIMULATE = 0x0005
MSG_SYNTHESIZE = 0x0006
# responses carry the request type with the high bit set
RESP_BIT = 0x8000
MSG_ERROR = 0xFFFF

ERR_BAD_MAGIC = 1
ERR_VERSION_MISMATCH = 2
ERR_UNKNOWN_ENTITY = 3
ERR_SIM_FAILED = 4
ERR_BAD_REQUEST = 5
ERR_NO_SESSION = 6

IR_HEADER = struct.Struct("<4sHHdQQ")  # "STIR", version, pad, fs, n_fft, sample count
IR_MAGIC = b"STIR"


def encode_frame(msg_type: int, payload: bytes = b"", version: int = PROTOCOL_VERSION) -> bytes:
    return HEADER.pack(MAGIC, version, msg_type, len(payload)) + payload


def encode_error(code: int, message: str) -> bytes:
    body = struct.pack("<H", code) + message.encode()
    return encode_frame(MSG_ERROR, body)


def decode_error(payload: bytes) -> tuple[int, str]:
    (code,) = struct.unpack_from("<H", payload, 0)
    return code, payload[2:].decode(errors="replace")


def encode_json(msg_type: int, obj) -> bytes:
    return encode_frame(msg_type, json.dumps(obj).encode())


def encode_impulse_payload(samples: np.ndarray, fs: float, n_fft: int) -> bytes:
    data = np.asarray(samples, dtype="<f8")
    head = IR_HEADER.pack(IR_MAGIC, 1, 0, float(fs), int(n_fft), len(data))
    return head + data.tobytes()


def decode_impulse_payload(payload: bytes) -> tuple[np.ndarray, float, int]:
    magic, version, _, fs, n_fft, count = IR_HEADER.unpack_from(payload, 0)
    if magic != IR_MAGIC or version != 1:
        raise ValueError("bad impulse-response payload header")
    samples = np.frombuffer(payload, dtype="<f8", count=count, offset=IR_HEADER.size).copy()
    return samples, fs, n_fft


@dataclass
class Frame:
    version: int
    msg_type: int
    payload: bytes


class FrameReader:
    """Incremental frame scanner that survives garbage between frames.

    feed() returns a list of events: ("frame", Frame) for each complete
    frame, ("garbage", n) once per run of bytes skipped while hunting for
    the next magic, and ("oversize", length) for frames whose declared
    payload exceeds MAX_PAYLOAD (the header is skipped and scanning
    resumes).
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple]:
        self._buf.extend(data)
        events: list[tuple] = []
        while True:
            idx = self._buf.find(MAGIC)
            if idx < 0:
                # keep a tail shorter than the magic in case it is a prefix
                drop = max(0, len(self._buf) - (len(MAGIC) - 1))
                if drop:
                    events.append(("garbage", drop))
                    del self._buf[:drop]
                return events
            if idx > 0:
                events.append(("garbage", idx))
                del self._buf[:idx]
            if len(self._buf) < HEADER.size:
                return events
            magic, version, msg_type, length = HEADER.unpack_from(self._buf, 0)
            if length > MAX_PAYLOAD:
                events.append(("oversize", length))
                del self._buf[: len(MAGIC)]  # resync past this magic
                continue
            if len(self._buf) < HEADER.size + length:
                return events
            payload = bytes(self._buf[HEADER.size : HEADER.size + length])
            del self._buf[: HEADER.size + length]
            events.append(("frame", Frame(version=version, msg_type=msg_type, payload=payload)))
