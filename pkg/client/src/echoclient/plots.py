"""Raster diagnostics: spectrograms and receiver-array scan patterns."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def spectrogram_image(signal, fs: float, path, nperseg: int = 256,
                      title: str = "spectrogram", db_floor: float = -90.0):
    """STFT magnitude image with time in ms and frequency in kHz.

    Returns (freqs_hz, times_s, magnitude) alongside writing the PNG.
    """
    signal = np.asarray(signal, dtype=float)
    step = nperseg // 2
    window = np.hanning(nperseg)
    n_frames = max(1, 1 + (len(signal) - nperseg) // step)
    frames = np.stack([
        signal[i * step : i * step + nperseg] * window
        for i in range(n_frames)
        if i * step + nperseg <= len(signal)
    ])
    spec = np.abs(np.fft.rfft(frames, axis=1)).T  # (freq, time)
    freqs = np.arange(spec.shape[0]) * fs / nperseg
    times = (np.arange(spec.shape[1]) * step + nperseg / 2) / fs
    fig, ax = plt.subplots(figsize=(8, 4))
    ref = spec.max() if spec.max() > 0 else 1.0
    db = 20.0 * np.log10(np.maximum(spec / ref, 10 ** (db_floor / 20.0)))
    im = ax.pcolormesh(times * 1e3, freqs / 1e3, db, shading="auto", cmap="magma")
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("frequency [kHz]")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="dB re max")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return freqs, times, spec


def scan_pattern_image(receiver_xy, intensities, path, title: str = "scan pattern"):
    """Per-receiver intensity map over the array plane (positions in m)."""
    xy = np.asarray(receiver_xy, dtype=float)
    vals = np.asarray(intensities, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    order = np.argsort(vals)  # draw the hottest on top
    sc = ax.scatter(xy[order, 0], xy[order, 1], c=vals[order], s=120, cmap="viridis",
                    edgecolors="k", linewidths=0.4)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    ax.set_aspect("equal")
    fig.colorbar(sc, ax=ax, label="intensity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
