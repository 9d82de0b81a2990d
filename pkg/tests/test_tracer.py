"""Specular tracing, reflection, and line-of-sight contracts."""

import numpy as np
import pytest

from conftest import make_material, simple_plate_scene
from echotrace import kernels, procedural
from echotrace.geometry import Pose, quat_from_axis_angle
from echotrace.scene import Emitter, MeshInstance, Receiver, Scene
from echotrace.tracer import line_of_sight, reflect, trace_specular
from reference_impl import segment_blocked, trace_reference


def test_reflect_normal_incidence():
    out = reflect([0.0, 0.0, -1.0], [0.0, 0.0, 1.0])
    assert np.allclose(out, [0.0, 0.0, 1.0], atol=1e-15)


def test_reflect_45_degrees():
    d = np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0)
    out = reflect(d, [0.0, 0.0, 1.0])
    assert np.allclose(out, np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0), atol=1e-15)


def test_reflect_angle_property():
    # oracle over 1e5 random pairs: incident angle to -n equals
    # reflected angle to n, and reflecting twice is the identity
    rng = np.random.default_rng(42)
    d = rng.standard_normal((100_000, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    n = rng.standard_normal((100_000, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    dot = np.einsum("ij,ij->i", d, n)
    r = d - 2.0 * dot[:, None] * n
    ang_in = np.arccos(np.clip(np.einsum("ij,ij->i", d, -n), -1, 1))
    ang_out = np.arccos(np.clip(np.einsum("ij,ij->i", r, n), -1, 1))
    assert np.abs(ang_in - ang_out).max() < 1e-12
    rr = r - 2.0 * np.einsum("ij,ij->i", r, n)[:, None] * n
    assert np.abs(rr - d).max() < 1e-12


def test_plate_first_bounce_distances(plate_scene):
    emitter = plate_scene.emitters[0]
    hits = trace_specular(plate_scene, emitter)
    assert len(hits) > 0
    first = hits.bounce == 0
    pos = hits.position[first]
    # oracle: exact ray-plane distance for a plate in the z = 1.715 plane
    dirs = pos - emitter.pose.position
    exact = 1.715 / (dirs[:, 2] / np.linalg.norm(dirs, axis=1))
    assert np.abs(hits.path_length[first] - exact).max() < 1e-6
    axial = np.abs(pos[:, 0]) + np.abs(pos[:, 1]) < 1e-9
    assert axial.any()
    assert hits.path_length[first][axial][0] == pytest.approx(1.715, abs=1e-12)


def test_two_parallel_plates_bounce_sequence():
    # hand-computed oracle: emitter 0.3 m from plate A, plates 1 m apart,
    # axial ray bounces A (0.3), B (1.3), A (2.3), B (3.3)
    mesh = procedural.plate(2.0, 2.0, 2, 2)
    pose_a = Pose(position=np.array([0.0, 0.0, -0.3]))  # +Z normal faces emitter
    pose_b = Pose(
        position=np.array([0.0, 0.0, 0.7]),
        orientation=quat_from_axis_angle([1.0, 0.0, 0.0], np.pi),
    )
    mat = make_material()
    scene = Scene(
        instances=[
            MeshInstance("a", "plate", mesh, mat, pose_a),
            MeshInstance("b", "plate", mesh, mat, pose_b),
        ],
        emitters=[Emitter("tx", Pose(), n_rays=2, max_extra_bounces=3, max_range=50.0,
                          source_level=np.array([1.0]))],
        receivers=[Receiver("rx", Pose())],
        frequencies=np.array([40000.0]),
        alpha_db_per_m=np.array([0.0]),
    )
    hits = trace_specular(scene, scene.emitters[0])
    down = hits.ray == 1  # ray 1 points along -Z toward plate A
    seq = hits.path_length[down]
    assert len(seq) == 4
    # each continuation origin retreats from the surface by the scene
    # epsilon, so bounce j accumulates a -j*eps offset over the ideal path
    eps = scene.epsilon
    expected = np.array([0.3, 1.3 - eps, 2.3 - 2 * eps, 3.3 - 3 * eps])
    assert np.abs(seq - expected).max() < 1e-9
    assert (np.diff(hits.path_length[down]) > 0).all()


def test_max_distance_unreachable_geometry():
    scene = simple_plate_scene(distance=1.0, rays=64, max_range=0.5)
    hits = trace_specular(scene, scene.emitters[0])
    assert len(hits) == 0


def test_r_total_strictly_increasing_along_rays(plate_scene):
    hits = trace_specular(plate_scene, plate_scene.emitters[0])
    for ray in np.unique(hits.ray):
        seq = hits.path_length[hits.ray == ray]
        assert (np.diff(seq) > 0).all()
        bounces = hits.bounce[hits.ray == ray]
        assert np.array_equal(bounces, np.arange(len(bounces)))  # contiguous from 0


def test_reflection_directions_unit_norm(plate_scene):
    hits = trace_specular(plate_scene, plate_scene.emitters[0])
    norms = np.linalg.norm(hits.reflection, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-9


def test_trace_matches_python_reference(plate_scene):
    hits = trace_specular(plate_scene, plate_scene.emitters[0])
    ref = trace_reference(plate_scene, plate_scene.emitters[0])
    assert len(hits) == len(ref)
    for i, rec in enumerate(ref):
        assert hits.ray[i] == rec["ray"]
        assert hits.bounce[i] == rec["bounce"]
        assert hits.triangle[i] == rec["triangle"]
        assert hits.path_length[i] == rec["path_length"]  # bitwise
        assert tuple(hits.position[i]) == rec["position"]
        assert tuple(hits.reflection[i]) == rec["reflection"]
        assert bool(hits.occluded_to_origin[i]) == rec["occluded"]


def test_trace_deterministic_across_worker_counts(plate_scene):
    emitter = plate_scene.emitters[0]
    before = kernels.worker_count()
    try:
        kernels.set_worker_count(1)
        one = trace_specular(plate_scene, emitter)
        kernels.set_worker_count(2)
        two = trace_specular(plate_scene, emitter)
    finally:
        kernels.set_worker_count(before)
    assert np.array_equal(one.path_length, two.path_length)
    assert np.array_equal(one.position, two.position)
    assert np.array_equal(one.triangle, two.triangle)


def test_line_of_sight_empty_scene():
    scene = Scene(
        instances=[], emitters=[], receivers=[],
        frequencies=np.array([1000.0]), alpha_db_per_m=np.array([0.0]),
    )
    assert line_of_sight(scene, [0, 0, 0], [1, 1, 1])


def test_line_of_sight_blocked_by_plate(plate_scene):
    # plate sits at z = 1.715
    assert not line_of_sight(plate_scene, [0, 0, 0], [0, 0, 3.0])
    assert line_of_sight(plate_scene, [0, 0, 0], [0, 0, 1.0])


def test_line_of_sight_same_side_matches_brute_oracle(plate_scene):
    rng = np.random.default_rng(11)
    v0, v1, v2 = plate_scene.tri_v0, plate_scene.tri_v1, plate_scene.tri_v2
    for _ in range(200):
        a = rng.uniform(-2, 2, 3)
        b = rng.uniform(-2, 2, 3)
        a[2] = rng.uniform(-1.0, 1.5)
        b[2] = rng.uniform(-1.0, 1.5)
        if np.array_equal(a, b):
            continue
        expected = not segment_blocked(tuple(a), tuple(b), plate_scene.epsilon, v0, v1, v2)
        assert line_of_sight(plate_scene, a, b) == expected


def test_line_of_sight_identical_points_rejected(plate_scene):
    with pytest.raises(ValueError):
        line_of_sight(plate_scene, [1, 2, 3], [1, 2, 3])


def test_hitbuffer_dump(tmp_path, plate_scene):
    hits = trace_specular(plate_scene, plate_scene.emitters[0])
    path = tmp_path / "hits.sthb"
    hits.dump(path)
    blob = path.read_bytes()
    assert blob[:4] == b"STHB"
    n = int.from_bytes(blob[8:16], "little")
    assert n == len(hits)
    record_size = 4 + 4 + 4 + 4 + 24 + 8 + 24 + 1 + 7
    assert len(blob) == 16 + n * record_size
