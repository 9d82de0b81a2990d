"""Scripting client for the echotrace simulation service.

Connects over TCP, controls poses, triggers simulations, decodes the
binary point cloud, synthesizes impulse responses and received signals
locally, and renders spectrogram / scan-pattern images.
"""

from .api import Session
from .synth import all_impulse_responses, impulse_response, render, transfer_spectrum
from .wire import (
    KIND_DIFFRACTION,
    KIND_PASSIVE,
    KIND_SPECULAR,
    PointCloud,
    ProtocolError,
    ServerError,
    decode_impulse,
    decode_pointcloud,
    encode_pointcloud,
)

__version__ = "0.1.0"
