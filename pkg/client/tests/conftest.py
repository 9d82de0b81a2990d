"""Fixtures that launch the simulation service as a black box.

The client package must consume the engine only through its external
interfaces, so everything here goes through `python -m echotrace ...`
subprocesses and TCP sockets; nothing imports the server code.
"""

import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def write_plate_obj(path: Path, width=2.0, height=2.0):
    w, h = width / 2.0, height / 2.0
    path.write_text(
        f"v {-w} {-h} 0\nv {w} {-h} 0\nv {w} {h} 0\nv {-w} {h} 0\n"
        "f 1 2 3\nf 1 3 4\n"
    )


def write_scene(directory: Path, *, bins=None, receivers=None, rays=400,
                bounces=1, alpha=0.0, plate_z=1.715, seed=None,
                candidates=64) -> Path:
    """Plate-facing-emitter scene; randomized when a seed is given."""
    rng = np.random.default_rng(seed if seed is not None else 0)
    if bins is None:
        n_bins = int(rng.integers(3, 6)) if seed is not None else 3
        bins = np.linspace(25000.0 + 1000 * rng.integers(0, 5),
                           50000.0 - 1000 * rng.integers(0, 5), n_bins).tolist()
    if receivers is None:
        receivers = [
            {"id": f"rx{i}", "pose": {"position": [
                float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3)), 0.0]}}
            for i in range(2)
        ]
    write_plate_obj(directory / "plate.obj")
    config = {
        "speed_of_sound": 343.0,
        "frequency_bins_hz": bins,
        "atmospheric_db_per_m": alpha,
        "diffraction_candidates_per_mesh": candidates,
        "materials": [{
            "id": "mat",
            "beta_smooth_rad": float(rng.uniform(0.05, 0.3)) if seed is not None else 0.1,
            "beta_edge_rad": float(rng.uniform(0.5, 1.2)) if seed is not None else 0.8,
            "k_smooth": float(rng.uniform(0.6, 1.0)) if seed is not None else 0.9,
            "k_edge": float(rng.uniform(0.1, 0.5)) if seed is not None else 0.3,
            "diffraction_coeff": float(rng.uniform(0.05, 0.4)) if seed is not None else 0.2,
        }],
        "meshes": [{"id": "plate", "path": "plate.obj"}],
        "instances": [{
            "id": "plate0", "mesh": "plate", "material": "mat",
            "pose": {"position": [float(rng.uniform(-0.2, 0.2)) if seed is not None else 0.0,
                                  float(rng.uniform(-0.2, 0.2)) if seed is not None else 0.0,
                                  plate_z],
                     "rotation_axis_angle": [1, 0, 0, np.pi]},
        }],
        "emitters": [{"id": "tx0", "rays": rays, "max_extra_bounces": bounces,
                      "max_range_m": 40.0}],
        "receivers": receivers,
    }
    path = directory / "scene.json"
    path.write_text(json.dumps(config))
    return path


def run_cli(*args, timeout=300):
    return subprocess.run(
        [sys.executable, "-m", "echotrace", *map(str, args)],
        capture_output=True, text=True, timeout=timeout,
    )


class ServerProcess:
    def __init__(self, scene_path: Path, port: int):
        self.port = port
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "echotrace", "serve", str(scene_path),
             "--port", str(port)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        deadline = time.time() + 60
        while time.time() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(f"server died: {self.proc.stderr.read()!r}")
            try:
                socket.create_connection(("127.0.0.1", port), timeout=1).close()
                return
            except OSError:
                time.sleep(0.2)
        raise RuntimeError("server never came up")

    def alive(self) -> bool:
        return self.proc.poll() is None

    def stop(self):
        self.proc.terminate()
        try:
            self.proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self.proc.kill()


@pytest.fixture(scope="session")
def server(tmp_path_factory):
    directory = tmp_path_factory.mktemp("server_scene")
    scene = write_scene(directory, rays=300, bounces=1)
    srv = ServerProcess(scene, free_port())
    yield srv
    srv.stop()
