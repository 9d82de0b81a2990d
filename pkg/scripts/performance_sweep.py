#!/usr/bin/env python3
"""Scaling sweep: magnitude-stage wall time vs rays, receivers, and bins.

Verifies the linear O(points * sources * receivers * bins) cost model on a
closed room where every ray survives all bounce levels, and prints one row
per configuration plus the observed doubling ratios.
"""

import argparse
import math
import time

import numpy as np

from echotrace import procedural
from echotrace.geometry import Pose
from echotrace.pipeline import SimulationFlags, run_simulation
from echotrace.scene import Emitter, MaterialSpec, MeshInstance, Receiver, Scene


def build_scene(rays, receivers, bins):
    ones = np.ones(bins)
    material = MaterialSpec(
        identifier="wall", beta_smooth=0.3 * ones, beta_edge=1.2 * ones,
        k_smooth=0.9 * ones, k_edge=0.5 * ones, diffraction_coeff=0.2 * ones,
    )
    room = MeshInstance("room", "room", procedural.box([6.0, 5.0, 3.0]), material, Pose())
    rcvs = [
        Receiver(f"rx{i:03d}", Pose(position=np.array(
            [0.4 * (i % 8) - 1.4, 0.35 * (i // 8) - 0.5, -0.2])))
        for i in range(receivers)
    ]
    emitter = Emitter("tx0", Pose(), n_rays=rays, max_extra_bounces=1,
                      max_range=100.0, source_level=ones)
    return Scene(
        instances=[room], emitters=[emitter], receivers=rcvs,
        frequencies=np.linspace(25_000.0, 50_000.0, bins),
        alpha_db_per_m=np.full(bins, 0.1),
    )


def magnitude_time(rays, receivers, bins, repeats):
    scene = build_scene(rays, receivers, bins)
    best = math.inf
    records = 0
    for _ in range(repeats):
        contribs = run_simulation(scene, SimulationFlags(True, False, False), seed=0)
        best = min(best, contribs.stats["magnitude_s"])
        records = len(contribs)
    return best, records


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-rays", type=int, default=30_000)
    ap.add_argument("--base-receivers", type=int, default=16)
    ap.add_argument("--base-bins", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    base_cfg = (args.base_rays, args.base_receivers, args.base_bins)
    print(f"{'rays':>8} {'receivers':>9} {'bins':>5} {'records':>10} {'magnitude_s':>12}")
    t0 = time.perf_counter()
    base, n = magnitude_time(*base_cfg, args.repeats)
    print(f"{base_cfg[0]:>8} {base_cfg[1]:>9} {base_cfg[2]:>5} {n:>10} {base:>12.3f}")
    for label, cfg in (
        ("rays", (2 * args.base_rays, args.base_receivers, args.base_bins)),
        ("receivers", (args.base_rays, 2 * args.base_receivers, args.base_bins)),
        ("bins", (args.base_rays, args.base_receivers, 2 * args.base_bins)),
    ):
        t, n = magnitude_time(*cfg, args.repeats)
        print(f"{cfg[0]:>8} {cfg[1]:>9} {cfg[2]:>5} {n:>10} {t:>12.3f}   "
              f"2x {label}: {t / base:.2f}x")
    print(f"total sweep time {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
