"""Geometric-acoustics simulation for in-air ultrasonic sensing.

Pipeline: curvature-based BRDF preprocessing, equal-area specular ray
tracing, curvature-importance-sampled diffraction, passive direct paths,
and FFT impulse-response synthesis, exposed as a library, a CLI, and a
TCP service.
"""

from .acoustics import (
    Contribution,
    ContributionSet,
    atmospheric_loss,
    diffraction_magnitudes,
    filter_diffraction_candidates,
    geometric_loss,
    passive_magnitudes,
    sample_diffraction_candidates,
    specular_intensity,
    specular_magnitudes,
)
from .curvature import (
    CurvatureTable,
    compute_curvature_table,
    estimate_footprint,
    map_brdf,
    triangle_curvature_metric,
    vertex_mean_curvature,
)
from .errors import (
    AliasRisk,
    EchotraceError,
    EmptyMesh,
    GridMismatch,
    InvalidFrequencyGrid,
    MissingMesh,
    ParseError,
    RevisionMismatch,
    SampleRateMismatch,
    UnknownEntity,
    UnknownMaterial,
)
from .geometry import Pose, quat_from_axis_angle
from .mesh import TriangleMesh, load_mesh
from .pipeline import SimulationFlags, run_simulation, scene_brdf, synthesize_pairs
from .scene import Emitter, MaterialSpec, MeshInstance, Receiver, Scene, build_scene
from .sphere import equal_area_directions
from .synthesis import (
    GainTable,
    ImpulseResponse,
    RenderedSignal,
    SpectralGrid,
    directional_gain,
    grid_for_scene,
    impulse_response,
    pair_impulse_response,
    render_signal,
    transfer_function,
)
from .tracer import HitBuffer, HitRecord, line_of_sight, reflect, trace_specular

__version__ = "0.1.0"
