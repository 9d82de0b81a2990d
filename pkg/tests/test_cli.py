"""Command-line interface: artifacts, determinism, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from echotrace import procedural
from echotrace.curvature import estimate_footprint
from echotrace.mesh import write_obj


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "echotrace", *map(str, args)],
        capture_output=True, text=True, cwd=cwd, timeout=300,
    )


@pytest.fixture
def scene_file(tmp_path):
    write_obj(tmp_path / "plate.obj", procedural.plate(2.0, 2.0, 2, 2))
    config = {
        "frequency_bins_hz": np.linspace(25000.0, 50000.0, 3).tolist(),
        "materials": [{"id": "default", "beta_smooth_rad": 0.1, "beta_edge_rad": 0.7,
                       "k_smooth": 0.9, "k_edge": 0.3, "diffraction_coeff": 0.2}],
        "meshes": [{"id": "plate", "path": "plate.obj"}],
        "instances": [{"id": "plate0", "mesh": "plate", "material": "default",
                       "pose": {"position": [0, 0, 1.715],
                                "rotation_axis_angle": [1, 0, 0, 3.141592653589793]}}],
        "emitters": [{"id": "tx0", "rays": 100, "max_extra_bounces": 1, "max_range_m": 40.0}],
        "receivers": [{"id": "rx0"}],
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(config))
    return path


def test_info_prints_counts_and_footprint(scene_file):
    res = run_cli("info", scene_file)
    assert res.returncode == 0
    assert "triangles: 8" in res.stdout
    assert "bins: 3" in res.stdout
    expected = estimate_footprint(8, 3)
    assert f"{expected} bytes" in res.stdout


def test_info_synthetic_footprint_override(scene_file):
    # planning mode for the 2^26-triangle, 20-bin configuration
    res = run_cli("info", scene_file, "--triangles", 2**26, "--bins", 20)
    assert res.returncode == 0
    assert "17179869312 bytes" in res.stdout
    assert "16384 MiB" in res.stdout


def test_unknown_flag_exits_2(scene_file):
    res = run_cli("simulate", scene_file, "--frobnicate")
    assert res.returncode == 2
    assert "usage" in (res.stderr + res.stdout).lower()


def test_missing_scene_is_one_line_machine_error(tmp_path):
    res = run_cli("info", tmp_path / "absent.json")
    assert res.returncode == 1
    lines = [l for l in res.stderr.strip().splitlines() if l]
    assert len(lines) == 1
    assert lines[0].startswith("error: ")


def test_simulate_deterministic_outputs(scene_file, tmp_path):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    for out in (out1, out2):
        res = run_cli("simulate", scene_file, "--out", out, "--seed", 7)
        assert res.returncode == 0, res.stderr
    b1 = (out1 / "pointcloud.stpc").read_bytes()
    b2 = (out2 / "pointcloud.stpc").read_bytes()
    assert b1 == b2
    assert (out1 / "pointcloud.json").read_text() == (out2 / "pointcloud.json").read_text()
    sidecar = json.loads((out1 / "pointcloud.json").read_text())
    assert sidecar["seed"] == 7
    assert sidecar["flags"] == {"specular": True, "diffraction": True, "passive": True}


def test_simulate_all_components_disabled(scene_file, tmp_path):
    out = tmp_path / "empty"
    res = run_cli("simulate", scene_file, "--out", out,
                  "--no-specular", "--no-diffraction", "--no-passive")
    assert res.returncode == 0, res.stderr
    blob = (out / "pointcloud.stpc").read_bytes()
    assert blob[:4] == b"STPC"  # valid header
    from echotrace.acoustics import ContributionSet

    decoded = ContributionSet.from_bytes(blob)
    assert len(decoded) == 0


def test_preprocess_writes_exact_size_cache(scene_file, tmp_path):
    out = tmp_path / "cache"
    res = run_cli("preprocess", scene_file, "--out", out)
    assert res.returncode == 0, res.stderr
    cache = out / "plate0.stue"
    assert cache.exists()
    assert cache.stat().st_size == estimate_footprint(8, 3)
    sidecar = json.loads((out / "plate0.json").read_text())
    assert sidecar["triangles"] == 8 and sidecar["bins"] == 3


def test_synthesize_writes_wav_raw_and_sidecars(scene_file, tmp_path):
    out = tmp_path / "synth"
    sig = tmp_path / "call.f64"
    from echotrace.synthesis import write_raw

    t = np.arange(250) / 250000.0
    write_raw(sig, np.sin(2 * np.pi * 30000.0 * t))
    res = run_cli("synthesize", scene_file, "--out", out, "--signal", sig,
                  "--fs", 250000.0, "--seed", 3)
    assert res.returncode == 0, res.stderr
    assert (out / "ir_tx0_rx0.wav").exists()
    assert (out / "ir_tx0_rx0.f64").exists()
    assert (out / "signal_rx0.wav").exists()
    meta = json.loads((out / "ir_tx0_rx0.json").read_text())
    assert meta["fs"] == 250000.0
    assert meta["seed"] == 3
    raw = np.fromfile(out / "ir_tx0_rx0.f64", dtype="<f8")
    assert len(raw) == meta["n_fft"]
    rendered = np.fromfile(out / "signal_rx0.f64", dtype="<f8")
    assert len(rendered) == meta["n_fft"] + 250 - 1


def test_serve_end_to_end(scene_file):
    import socket
    import time

    from echotrace.protocol import MSG_PING, RESP_BIT, FrameReader, encode_frame

    proc = subprocess.Popen(
        [sys.executable, "-m", "echotrace", "serve", str(scene_file), "--port", "17431"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    try:
        deadline = time.time() + 30
        sock = None
        while time.time() < deadline:
            try:
                sock = socket.create_connection(("127.0.0.1", 17431), timeout=1)
                break
            except OSError:
                time.sleep(0.2)
        assert sock is not None, "server never came up"
        sock.sendall(encode_frame(MSG_PING))
        reader = FrameReader()
        frames = []
        while not frames:
            frames = [f for k, f in reader.feed(sock.recv(65536)) if k == "frame"]
        assert frames[0].msg_type == MSG_PING | RESP_BIT
        sock.close()
    finally:
        proc.terminate()
        proc.wait(timeout=10)
