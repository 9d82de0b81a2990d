"""Synchronous session against a running simulation server."""

from __future__ import annotations

import json
import socket

import numpy as np

from . import wire
from .wire import (
    MSG_GET_CONFIG,
    MSG_HELLO,
    MSG_PING,
    MSG_SET_POSE,
    MSG_SIMULATE,
    MSG_SYNTHESIZE,
    RESP_BIT,
    PointCloud,
    ProtocolError,
    ServerError,
)


class Session:
    """One connection, strict request/response, HELLO performed on entry."""

    def __init__(self, host: str = "127.0.0.1", port: int = 7343, timeout: float = 60.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buffer = bytearray()
        self._hello = self._request(MSG_HELLO)

    # -- plumbing ---------------------------------------------------------

    def _request(self, msg_type: int, payload: bytes = b"") -> bytes:
        self.sock.sendall(wire.encode_frame(msg_type, payload))
        while True:
            frames = wire.split_frames(self._buffer)
            if frames:
                version, rtype, body = frames[0]
                if rtype == wire.MSG_ERROR:
                    raise wire.decode_error(body)
                if rtype != (msg_type | RESP_BIT):
                    raise ProtocolError(f"unexpected response type 0x{rtype:04x}")
                return body
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            self._buffer.extend(chunk)

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- commands ----------------------------------------------------------

    @property
    def server_info(self) -> dict:
        return json.loads(self._hello)

    def ping(self) -> None:
        self._request(MSG_PING)

    def get_config(self) -> dict:
        return json.loads(self._request(MSG_GET_CONFIG))

    def set_pose(self, entity: str, position, orientation_wxyz=(1.0, 0.0, 0.0, 0.0)) -> int:
        body = json.dumps(
            {
                "entity": entity,
                "pose": {
                    "position": [float(x) for x in position],
                    "orientation_wxyz": [float(x) for x in orientation_wxyz],
                },
            }
        ).encode()
        return json.loads(self._request(MSG_SET_POSE, body))["revision"]

    def simulate(self, specular: bool = True, diffraction: bool = True,
                 passive: bool = True, seed: int = 0) -> PointCloud:
        body = json.dumps(
            {"flags": {"specular": specular, "diffraction": diffraction, "passive": passive},
             "seed": int(seed)}
        ).encode()
        return wire.decode_pointcloud(self._request(MSG_SIMULATE, body))

    def synthesize_remote(self, source: str, receiver: str, fs: float | None = None,
                          n_fft: int | None = None, seed: int = 0,
                          specular: bool = True, diffraction: bool = True,
                          passive: bool = True) -> tuple[np.ndarray, float, int]:
        req: dict = {
            "source": source,
            "receiver": receiver,
            "seed": int(seed),
            "flags": {"specular": specular, "diffraction": diffraction, "passive": passive},
        }
        if fs is not None:
            req["fs"] = float(fs)
        if n_fft is not None:
            req["n_fft"] = int(n_fft)
        return wire.decode_impulse(self._request(MSG_SYNTHESIZE, json.dumps(req).encode()))
