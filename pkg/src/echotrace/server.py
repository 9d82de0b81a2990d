"""TCP service exposing the simulation pipeline to external clients.

Connections are handled one request at a time, strictly in order. Scene
pose updates go through a single-writer lock and bump the revision;
simulations always read one consistent snapshot. Malformed input earns an
error frame, never a crash or a dropped connection.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading
from collections import OrderedDict

from . import protocol
from .errors import EchotraceError, UnknownEntity
from .geometry import Pose
from .pipeline import SimulationFlags, run_simulation, synthesize_pairs
from .protocol import (
    ERR_BAD_MAGIC,
    ERR_BAD_REQUEST,
    ERR_NO_SESSION,
    ERR_SIM_FAILED,
    ERR_UNKNOWN_ENTITY,
    ERR_VERSION_MISMATCH,
    MSG_GET_CONFIG,
    MSG_HELLO,
    MSG_PING,
    MSG_SET_POSE,
    MSG_SIMULATE,
    MSG_SYNTHESIZE,
    PROTOCOL_VERSION,
    RESP_BIT,
)
from .scene import Scene
from .synthesis import SpectralGrid, grid_for_scene

log = logging.getLogger(__name__)

DEFAULT_PORT = 7343
_CACHE_SLOTS = 4


class SimulationServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server owning one scene and a small result cache."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, scene: Scene, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        super().__init__((host, port), _Handler)
        self.scene = scene
        self.scene_lock = threading.Lock()
        self._cache: OrderedDict[tuple, object] = OrderedDict()

    @property
    def port(self) -> int:
        return self.server_address[1]

    def snapshot(self) -> Scene:
        with self.scene_lock:
            return self.scene

    def set_pose(self, entity_id: str, pose: Pose) -> int:
        with self.scene_lock:
            self.scene = self.scene.with_pose(entity_id, pose)
            return self.scene.revision

    def simulate_cached(self, scene: Scene, flags: SimulationFlags, seed: int):
        key = (scene.revision, flags.specular, flags.diffraction, flags.passive, seed)
        with self.scene_lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        result = run_simulation(scene, flags, seed)
        with self.scene_lock:
            self._cache[key] = result
            while len(self._cache) > _CACHE_SLOTS:
                self._cache.popitem(last=False)
        return result


class _Handler(socketserver.BaseRequestHandler):
    server: SimulationServer

    def setup(self):
        self.reader = protocol.FrameReader()
        self.hello_done = False
        self.in_garbage_run = False

    def handle(self):
        while True:
            try:
                data = self.request.recv(65536)
            except (ConnectionError, OSError):
                return
            if not data:
                return
            for event in self.reader.feed(data):
                if not self._dispatch_event(event):
                    return

    def _dispatch_event(self, event) -> bool:
        kind = event[0]
        if kind == "garbage":
            # one error per garbage run, not one per buffered fragment
            if not self.in_garbage_run:
                self.in_garbage_run = True
                self._send(
                    protocol.encode_error(ERR_BAD_MAGIC, "framing lost; resynced to next magic")
                )
            return True
        self.in_garbage_run = False
        if kind == "oversize":
            self._send(protocol.encode_error(ERR_BAD_REQUEST, "declared payload too large"))
            return True
        frame: protocol.Frame = event[1]
        try:
            self._handle_frame(frame)
        except ConnectionError:
            return False
        except Exception as exc:  # a failing request must not kill the connection
            log.exception("request failed")
            self._send(protocol.encode_error(ERR_SIM_FAILED, f"{type(exc).__name__}: {exc}"))
        return True

    def _send(self, blob: bytes) -> None:
        try:
            self.request.sendall(blob)
        except (BrokenPipeError, ConnectionError, OSError):
            raise ConnectionError("peer went away") from None

    def _handle_frame(self, frame: protocol.Frame) -> None:
        if frame.version != PROTOCOL_VERSION:
            self._send(
                protocol.encode_error(
                    ERR_VERSION_MISMATCH,
                    f"server speaks protocol {PROTOCOL_VERSION}, client sent {frame.version}",
                )
            )
            return
        t = frame.msg_type
        if t == MSG_HELLO:
            self.hello_done = True
            self._send(
                protocol.encode_json(
                    MSG_HELLO | RESP_BIT, {"server": "echotrace", "protocol": PROTOCOL_VERSION}
                )
            )
            return
        if t == MSG_PING:
            self._send(protocol.encode_frame(MSG_PING | RESP_BIT))
            return
        if not self.hello_done:
            self._send(protocol.encode_error(ERR_NO_SESSION, "send HELLO before other requests"))
            return
        if t == MSG_GET_CONFIG:
            self._send(protocol.encode_json(MSG_GET_CONFIG | RESP_BIT, self.server.snapshot().summary()))
        elif t == MSG_SET_POSE:
            self._set_pose(frame)
        elif t == MSG_SIMULATE:
            self._simulate(frame)
        elif t == MSG_SYNTHESIZE:
            self._synthesize(frame)
        else:
            self._send(protocol.encode_error(ERR_BAD_REQUEST, f"unknown message type 0x{t:04x}"))

    def _json_body(self, frame: protocol.Frame):
        try:
            return json.loads(frame.payload.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._send(protocol.encode_error(ERR_BAD_REQUEST, f"bad JSON payload: {exc}"))
            return None

    def _set_pose(self, frame: protocol.Frame) -> None:
        body = self._json_body(frame)
        if body is None:
            return
        try:
            pose = Pose.from_dict(body.get("pose", {}))
            revision = self.server.set_pose(body.get("entity", ""), pose)
        except UnknownEntity as exc:
            self._send(protocol.encode_error(ERR_UNKNOWN_ENTITY, str(exc)))
            return
        except (ValueError, KeyError, EchotraceError) as exc:
            self._send(protocol.encode_error(ERR_BAD_REQUEST, str(exc)))
            return
        self._send(protocol.encode_json(MSG_SET_POSE | RESP_BIT, {"revision": revision}))

    def _simulate(self, frame: protocol.Frame) -> None:
        body = self._json_body(frame)
        if body is None:
            return
        flags = SimulationFlags.from_dict(body.get("flags", {}))
        seed = int(body.get("seed", 0))
        scene = self.server.snapshot()
        try:
            result = self.server.simulate_cached(scene, flags, seed)
        except EchotraceError as exc:
            self._send(protocol.encode_error(ERR_SIM_FAILED, str(exc)))
            return
        self._send(protocol.encode_frame(MSG_SIMULATE | RESP_BIT, result.to_bytes()))

    def _synthesize(self, frame: protocol.Frame) -> None:
        body = self._json_body(frame)
        if body is None:
            return
        scene = self.server.snapshot()
        try:
            source = body["source"]
            receiver = body["receiver"]
            flags = SimulationFlags.from_dict(body.get("flags", {}))
            seed = int(body.get("seed", 0))
            scene.emitter(source)
            scene.receiver(receiver)
            if "n_fft" in body:
                grid = SpectralGrid(fs=float(body["fs"]), n_fft=int(body["n_fft"]))
            else:
                grid = grid_for_scene(scene, fs=body.get("fs"))
            contribs = self.server.simulate_cached(scene, flags, seed)
            from .synthesis import pair_impulse_response

            h = pair_impulse_response(
                contribs, source, receiver, grid, scene.speed_of_sound, scene.frequencies
            )
        except UnknownEntity as exc:
            self._send(protocol.encode_error(ERR_UNKNOWN_ENTITY, str(exc)))
            return
        except KeyError as exc:
            self._send(protocol.encode_error(ERR_BAD_REQUEST, f"missing field {exc}"))
            return
        except (ValueError, EchotraceError) as exc:
            self._send(protocol.encode_error(ERR_SIM_FAILED, str(exc)))
            return
        payload = protocol.encode_impulse_payload(h.samples, grid.fs, grid.n_fft)
        self._send(protocol.encode_frame(MSG_SYNTHESIZE | RESP_BIT, payload))


def serve(scene: Scene, host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> None:
    """Run the server until interrupted."""
    with SimulationServer(scene, host, port) as srv:
        log.info("listening on %s:%d", host, srv.port)
        srv.serve_forever()
