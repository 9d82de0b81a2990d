"""End-to-end orchestration: curvature tables, simulation, synthesis.

Deterministic by construction: a fixed (scene revision, component flags,
seed) triple always produces byte-identical contribution sets, whatever
the worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import acoustics, synthesis
from .acoustics import (
    ContributionSet,
    SceneBrdf,
    assemble_scene_brdf,
    concatenate_contributions,
    diffraction_magnitudes,
    empty_contribution_set,
    filter_diffraction_candidates,
    frustum_instances,
    passive_magnitudes,
    sample_diffraction_candidates,
    specular_magnitudes,
)
from .curvature import CurvatureTable, compute_curvature_table
from .scene import Scene
from .synthesis import GainTable, SpectralGrid, grid_for_scene, pair_impulse_response
from .tracer import emission_directions, trace_specular


def curvature_tables(scene: Scene) -> list[CurvatureTable]:
    """Per-instance curvature/BRDF tables, cached on the scene revision.

    Tables are computed on local (scaled) mesh coordinates, so they
    survive pose-only revisions untouched.
    """
    tables = []
    for inst in scene.instances:
        cached = scene._curvature_cache.get(inst.identifier)
        if cached is None:
            cached = compute_curvature_table(inst.scaled_mesh, inst.material, scene.n_bins)
            scene._curvature_cache[inst.identifier] = cached
        tables.append(cached)
    return tables


def scene_brdf(scene: Scene) -> SceneBrdf:
    return assemble_scene_brdf(scene, curvature_tables(scene))


@dataclass
class SimulationFlags:
    specular: bool = True
    diffraction: bool = True
    passive: bool = True

    def to_dict(self) -> dict:
        return {"specular": self.specular, "diffraction": self.diffraction, "passive": self.passive}

    @staticmethod
    def from_dict(d: dict) -> "SimulationFlags":
        return SimulationFlags(
            specular=bool(d.get("specular", True)),
            diffraction=bool(d.get("diffraction", True)),
            passive=bool(d.get("passive", True)),
        )


def run_simulation(scene: Scene, flags: SimulationFlags | None = None, seed: int = 0) -> ContributionSet:
    """Trace, sample, and score every enabled component into one point cloud.

    Diffraction draws a fixed candidate budget per participating mesh
    instance, each on an independent substream of the seed, then filters
    by source visibility and incidence angle. Per-emitter gain tables are
    applied before records are gathered.
    """
    flags = flags or SimulationFlags()
    stats: dict[str, float] = {}
    brdf = scene_brdf(scene) if (flags.specular or flags.diffraction) and scene.instances else None
    parts: list[ContributionSet] = []
    magnitude_time = 0.0

    t0 = time.perf_counter()
    hit_buffers = {}
    if flags.specular and scene.instances:
        for emitter in scene.emitters:
            hit_buffers[emitter.identifier] = trace_specular(scene, emitter)
    stats["trace_s"] = time.perf_counter() - t0

    if flags.specular and scene.instances:
        t0 = time.perf_counter()
        for emitter in scene.emitters:
            hits = hit_buffers[emitter.identifier]
            part = specular_magnitudes(scene, hits, brdf)
            if emitter.gain_table is not None and len(part):
                dirs = emission_directions(emitter)
                departures = dirs[hits.ray]
                part = _apply_gain(part, emitter, departures[part.index])
            parts.append(part)
        magnitude_time += time.perf_counter() - t0

    if flags.diffraction and scene.instances:
        t0 = time.perf_counter()
        for emitter in scene.emitters:
            candidates = []
            for order, inst_idx in enumerate(frustum_instances(scene, emitter)):
                cand = sample_diffraction_candidates(
                    scene,
                    brdf,
                    emitter,
                    scene.diffraction_candidates_per_mesh,
                    seed=_substream(seed, emitter.identifier, order),
                    instance_indices=[inst_idx],
                )
                if len(cand):
                    candidates.append(cand)
            if candidates:
                merged = candidates[0]
                if len(candidates) > 1:
                    merged = acoustics.DiffractionCandidates(
                        emitter_id=emitter.identifier,
                        scene_revision=scene.revision,
                        position=np.concatenate([c.position for c in candidates]),
                        triangle=np.concatenate([c.triangle for c in candidates]),
                        instance=np.concatenate([c.instance for c in candidates]),
                    )
                kept = filter_diffraction_candidates(scene, merged, emitter)
                part = diffraction_magnitudes(scene, kept, brdf)
                if emitter.gain_table is not None and len(part):
                    departures = kept.position[part.index] - emitter.pose.position[None, :]
                    part = _apply_gain(part, emitter, departures)
                parts.append(part)
        magnitude_time += time.perf_counter() - t0

    if flags.passive:
        t0 = time.perf_counter()
        part = passive_magnitudes(scene)
        gain_parts = []
        for s_idx, emitter in enumerate(scene.emitters):
            if emitter.gain_table is None:
                continue
            mask = part.source == s_idx
            if mask.any():
                departures = part.position[mask] - emitter.pose.position[None, :]
                sub = _subset(part, mask)
                gain_parts.append((mask, _apply_gain(sub, emitter, departures)))
        for mask, scaled in gain_parts:
            part.magnitude[mask] = scaled.magnitude
        parts.append(part)
        magnitude_time += time.perf_counter() - t0

    stats["magnitude_s"] = magnitude_time
    if parts:
        result = concatenate_contributions([empty_contribution_set(scene)] + parts)
    else:
        result = empty_contribution_set(scene)
    result.stats = stats
    return result


def _substream(seed: int, emitter_id: str, order: int) -> int:
    """Stable per-(emitter, mesh) seed derived from the run seed."""
    h = 1469598103934665603
    for ch in emitter_id.encode():
        h = ((h ^ ch) * 1099511628211) % (1 << 64)
    return int(np.random.SeedSequence([seed & (2**32 - 1), h % (2**31), order]).generate_state(1)[0])


def _subset(contribs: ContributionSet, mask: np.ndarray) -> ContributionSet:
    return ContributionSet(
        scene_revision=contribs.scene_revision,
        source_ids=contribs.source_ids,
        receiver_ids=contribs.receiver_ids,
        n_bins=contribs.n_bins,
        n_specular_points=0,
        n_diffraction_points=0,
        kind=contribs.kind[mask],
        source=contribs.source[mask],
        receiver=contribs.receiver[mask],
        position=contribs.position[mask],
        path_length=contribs.path_length[mask],
        index=contribs.index[mask],
        magnitude=contribs.magnitude[mask],
    )


def _apply_gain(part: ContributionSet, emitter, departures: np.ndarray) -> ContributionSet:
    """Scale magnitudes by the emitter's directional gain per record."""
    table: GainTable = emitter.gain_table
    local = emitter.pose.inverse().rotate(departures)  # directions: rotation only
    norms = np.linalg.norm(local, axis=1)
    norms[norms == 0.0] = 1.0
    unit = local / norms[:, None]
    az = np.arctan2(unit[:, 1], unit[:, 0])
    el = np.arcsin(np.clip(unit[:, 2], -1.0, 1.0))
    mags = part.magnitude.astype(np.float64)
    for i in range(len(part)):
        mags[i] *= table.lookup(float(az[i]), float(el[i]))
    part.magnitude = mags.astype(np.float32)
    return part


def synthesize_pairs(
    scene: Scene,
    contribs: ContributionSet,
    grid: SpectralGrid | None = None,
    fs: float | None = None,
    signal_duration: float = 0.0,
):
    """Impulse responses for every (source, receiver) pair in the scene."""
    if grid is None:
        grid = grid_for_scene(scene, fs=fs, signal_duration=signal_duration)
    out = {}
    for s in contribs.source_ids:
        for m in contribs.receiver_ids:
            out[(s, m)] = pair_impulse_response(
                contribs, s, m, grid, scene.speed_of_sound, scene.frequencies
            )
    return grid, out


def render_all(
    scene: Scene, responses: dict, emitted: np.ndarray, emitted_fs: float
) -> dict[str, synthesis.RenderedSignal]:
    """Per-receiver rendered signals, summed over sources."""
    by_receiver: dict[str, list] = {}
    for (s, m), h in responses.items():
        by_receiver.setdefault(m, []).append(h)
    return {
        m: synthesis.render_receiver(hs, emitted, emitted_fs) for m, hs in sorted(by_receiver.items())
    }
