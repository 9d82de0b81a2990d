"""Batch entry point: preprocess, simulate, synthesize, serve, info.

Every binary artifact gets a JSON sidecar carrying the seed and flags that
produced it, so outputs are self-describing and byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import kernels, synthesis
from .curvature import estimate_footprint, write_cache
from .errors import EchotraceError
from .pipeline import SimulationFlags, curvature_tables, run_simulation, synthesize_pairs
from .scene import Scene, build_scene
from .server import DEFAULT_PORT, serve


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    workers = args.workers or int(os.environ.get("ECHOTRACE_WORKERS", 0) or 0)
    if workers:
        kernels.set_worker_count(workers)
    try:
        return args.func(args)
    except EchotraceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echotrace", description="geometric-acoustics simulation for in-air ultrasound"
    )
    parser.add_argument("--workers", type=int, default=0, help="compute threads (default: cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="compute and cache curvature/BRDF tables")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, default=None, help="cache directory (default: <scene dir>/cache)")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("simulate", help="run the pipeline and export the point cloud")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, required=True)
    _add_component_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("synthesize", help="impulse responses and rendered signals per pair")
    p.add_argument("scene", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--signal", type=Path, default=None, help="emitted waveform (.wav or raw .f64)")
    p.add_argument("--fs", type=float, default=None, help="synthesis sample rate, Hz")
    _add_component_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("serve", help="run the TCP service")
    p.add_argument("scene", type=Path)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("info", help="triangle counts, footprint estimate, material table")
    p.add_argument("scene", type=Path)
    p.add_argument("--triangles", type=int, default=None, help="hypothetical triangle count")
    p.add_argument("--bins", type=int, default=None, help="hypothetical frequency bin count")
    p.set_defaults(func=_cmd_info)
    return parser


def _add_component_flags(p: argparse.ArgumentParser) -> None:
    for name in ("specular", "diffraction", "passive"):
        p.add_argument(f"--{name}", action=argparse.BooleanOptionalAction, default=None)


def _flags_from_args(args) -> SimulationFlags:
    chosen = {name: getattr(args, name) for name in ("specular", "diffraction", "passive")}
    if all(v is None for v in chosen.values()):
        return SimulationFlags(True, True, True)
    return SimulationFlags(**{k: bool(v) for k, v in chosen.items()})


def _cmd_preprocess(args) -> int:
    scene = build_scene(args.scene)
    out_dir = args.out or (args.scene.parent / "cache")
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = curvature_tables(scene)
    for inst, table in zip(scene.instances, tables):
        path = out_dir / f"{inst.identifier}.stue"
        n = write_cache(path, inst.scaled_mesh, table)
        sidecar = {
            "instance": inst.identifier,
            "mesh": inst.mesh_id,
            "material": inst.material.identifier,
            "triangles": inst.scaled_mesh.n_triangles,
            "bins": scene.n_bins,
            "bytes": n,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        print(f"{path} {n} bytes")
    return 0


def _cmd_simulate(args) -> int:
    scene = build_scene(args.scene)
    flags = _flags_from_args(args)
    result = run_simulation(scene, flags, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    cloud = args.out / "pointcloud.stpc"
    cloud.write_bytes(result.to_bytes())
    sidecar = {
        "scene": str(args.scene),
        "scene_revision": result.scene_revision,
        "seed": args.seed,
        "flags": flags.to_dict(),
        "records": len(result),
        "specular_points": result.n_specular_points,
        "diffraction_points": result.n_diffraction_points,
        "source_ids": result.source_ids,
        "receiver_ids": result.receiver_ids,
        "bins": result.n_bins,
    }
    (args.out / "pointcloud.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    print(f"{cloud} {len(result)} records")
    return 0


def _load_signal(args) -> tuple[np.ndarray, float] | None:
    if args.signal is None:
        return None
    if args.signal.suffix.lower() == ".wav":
        return synthesis.read_wav(args.signal)
    if args.fs is None:
        print("error: ValueError: raw signals need --fs", file=sys.stderr)
        raise SystemExit(1)
    return synthesis.read_raw(args.signal), float(args.fs)


def _cmd_synthesize(args) -> int:
    scene = build_scene(args.scene)
    flags = _flags_from_args(args)
    signal = _load_signal(args)
    result = run_simulation(scene, flags, args.seed)
    duration = len(signal[0]) / signal[1] if signal else 0.0
    fs = args.fs or (signal[1] if signal else None)
    grid, responses = synthesize_pairs(scene, result, fs=fs, signal_duration=duration)
    args.out.mkdir(parents=True, exist_ok=True)
    meta_common = {
        "scene": str(args.scene),
        "scene_revision": result.scene_revision,
        "seed": args.seed,
        "flags": flags.to_dict(),
        "fs": grid.fs,
        "n_fft": grid.n_fft,
    }
    for (s, m), h in sorted(responses.items()):
        stem = args.out / f"ir_{s}_{m}"
        synthesis.write_wav(stem.with_suffix(".wav"), h.samples, grid.fs)
        synthesis.write_raw(stem.with_suffix(".f64"), h.samples)
        meta = dict(meta_common, kind="impulse_response", source=s, receiver=m, samples=len(h.samples))
        stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if signal is not None:
        from .pipeline import render_all

        rendered = render_all(scene, responses, signal[0], grid.fs)
        for m, sig in sorted(rendered.items()):
            stem = args.out / f"signal_{m}"
            synthesis.write_wav(stem.with_suffix(".wav"), sig.samples, grid.fs)
            synthesis.write_raw(stem.with_suffix(".f64"), sig.samples)
            meta = dict(meta_common, kind="rendered_signal", receiver=m, samples=len(sig.samples))
            stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"{args.out} {len(responses)} pairs at fs={grid.fs:g}")
    return 0


def _cmd_serve(args) -> int:
    scene = build_scene(args.scene)
    port = args.port or int(os.environ.get("ECHOTRACE_PORT", DEFAULT_PORT))
    print(f"serving {args.scene} on {args.host}:{port}", flush=True)
    serve(scene, args.host, port)
    return 0


def _cmd_info(args) -> int:
    scene = build_scene(args.scene)
    t = args.triangles if args.triangles is not None else scene.n_triangles
    f = args.bins if args.bins is not None else scene.n_bins
    footprint = estimate_footprint(t, f)
    print(f"triangles: {scene.n_triangles}")
    for inst in scene.instances:
        print(
            f"  instance {inst.identifier}: mesh={inst.mesh_id} material={inst.material.identifier}"
            f" triangles={inst.scaled_mesh.n_triangles}"
        )
    print(f"emitters: {len(scene.emitters)}  receivers: {len(scene.receivers)}  bins: {scene.n_bins}")
    print(f"footprint({t} triangles, {f} bins): {footprint} bytes = {footprint / 2**20:.0f} MiB")
    print("materials:")
    for mat in {i.material.identifier: i.material for i in scene.instances}.values():
        print(
            f"  {mat.identifier}: eta={mat.curvature_scale} C_sat={mat.curvature_saturation}"
            f" beta=[{mat.beta_smooth[0]:.3f}..{mat.beta_edge[0]:.3f}]"
            f" k=[{mat.k_smooth[0]:.3f}..{mat.k_edge[0]:.3f}]"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
