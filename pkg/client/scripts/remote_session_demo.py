#!/usr/bin/env python3
"""Drive a running simulation server: poses, point clouds, images.

Starts its own server subprocess when --scene is given, otherwise
connects to --host/--port. Produces a spectrogram of the received call
and a scan-pattern image across receivers.
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from echoclient import Session, synth
from echoclient.plots import scan_pattern_image, spectrogram_image


def chirp(f0, f1, duration, fs):
    t = np.arange(int(round(duration * fs))) / fs
    k = (f1 - f0) / duration
    return np.sin(2 * np.pi * (f0 * t + 0.5 * k * t * t))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scene", type=Path, default=None,
                    help="scene file; spawns a local server when given")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=7343)
    ap.add_argument("--out", type=Path, default=Path("out/client_demo"))
    ap.add_argument("--fs", type=float, default=200_000.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    proc = None
    if args.scene is not None:
        proc = subprocess.Popen(
            [sys.executable, "-m", "echotrace", "serve", str(args.scene),
             "--port", str(args.port)],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
        )
        time.sleep(2.0)
    try:
        session = None
        for _ in range(50):
            try:
                session = Session(args.host, args.port)
                break
            except OSError:
                time.sleep(0.3)
        if session is None:
            raise SystemExit("error: could not reach the server")
        with session as s:
            cfg = s.get_config()
            print(f"connected: protocol {s.server_info['protocol']}, "
                  f"{cfg['triangles']} triangles, revision {cfg['revision']}")
            cloud = s.simulate(seed=args.seed)
            print(f"point cloud: {len(cloud)} records "
                  f"({cloud.n_specular_points} specular points, "
                  f"{cloud.n_diffraction_points} diffraction points)")

            bins = cfg["frequency_bins_hz"]
            c = cfg["speed_of_sound"]
            n_fft = 16384
            call = chirp(bins[0], bins[-1], 0.0025, args.fs)
            h = synth.impulse_response(cloud, 0, 0, bins, fs=args.fs, n_fft=n_fft, c=c)
            received = synth.render(h, call)
            spectrogram_image(received, args.fs, args.out / "received_spectrogram.png",
                              title="received call, rx0")

            # per-receiver peak intensity across the array (scan pattern)
            xy = np.array([r["pose"]["position"][:2] for r in cfg["receivers"]])
            intensity = []
            for m in range(cloud.n_receivers):
                hm = synth.impulse_response(cloud, 0, m, bins, fs=args.fs, n_fft=n_fft, c=c)
                intensity.append(np.abs(hm).max())
            scan_pattern_image(xy, intensity, args.out / "scan_pattern.png")
            print(f"images in {args.out}")
    finally:
        if proc is not None:
            proc.terminate()
            proc.wait(timeout=10)


if __name__ == "__main__":
    main()
