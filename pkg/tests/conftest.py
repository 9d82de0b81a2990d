"""Shared fixtures: small canonical scenes and materials."""

import numpy as np
import pytest

from echotrace import procedural
from echotrace.geometry import Pose, quat_from_axis_angle
from echotrace.scene import Emitter, MaterialSpec, MeshInstance, Receiver, Scene


def make_material(n_bins=1, identifier="mat", beta_smooth=0.1, beta_edge=0.8,
                  k_smooth=1.0, k_edge=0.4, diffraction_coeff=0.2,
                  curvature_scale=1.0, curvature_saturation=50.0, area_ref=None):
    ones = np.ones(n_bins)
    return MaterialSpec(
        identifier=identifier,
        beta_smooth=beta_smooth * ones,
        beta_edge=beta_edge * ones,
        k_smooth=k_smooth * ones,
        k_edge=k_edge * ones,
        diffraction_coeff=diffraction_coeff * ones,
        curvature_scale=curvature_scale,
        curvature_saturation=curvature_saturation,
        area_ref=area_ref,
    )


def plate_facing_minus_z(width=2.0, height=2.0, distance=1.715, nx=4, ny=4):
    """Plate whose +Z normal faces back toward the origin from z=distance."""
    mesh = procedural.plate(width, height, nx, ny)
    # plate normal is +Z; flip it toward the origin by a pi rotation about X
    pose = Pose(
        position=np.array([0.0, 0.0, distance]),
        orientation=quat_from_axis_angle([1.0, 0.0, 0.0], np.pi),
    )
    return mesh, pose


def simple_plate_scene(n_bins=1, distance=1.715, rays=1000, bounces=1, alpha=0.0,
                       beta_smooth=0.05, receivers=None, freq_lo=40000.0, freq_hi=60000.0,
                       max_range=50.0):
    mesh, pose = plate_facing_minus_z(distance=distance)
    mat = make_material(n_bins, beta_smooth=beta_smooth)
    inst = MeshInstance("plate0", "plate", mesh, mat, pose)
    emitter = Emitter(
        "tx0", Pose(), n_rays=rays, max_extra_bounces=bounces, max_range=max_range,
        source_level=np.ones(n_bins),
    )
    if receivers is None:
        receivers = [Receiver("rx0", Pose())]
    freqs = np.linspace(freq_lo, freq_hi, n_bins) if n_bins > 1 else np.array([freq_lo])
    return Scene(
        instances=[inst],
        emitters=[emitter],
        receivers=receivers,
        frequencies=freqs,
        alpha_db_per_m=np.full(n_bins, alpha),
    )


@pytest.fixture
def plate_scene():
    return simple_plate_scene()


@pytest.fixture(scope="session")
def unit_icosphere3():
    return procedural.icosphere(1.0, 3)
