"""Client-side signal synthesis from a decoded point cloud.

Reimplements the magnitude-and-delay spectral model: each contribution
contributes |H(f)| = M interpolated from the coarse bins (flat outside)
with phase exp(-j 2 pi f r / c); pair spectra sum and invert through a
real FFT. Numerically interchangeable with the server-side synthesis on
identical inputs, without sharing any code with it.
"""

from __future__ import annotations

import numpy as np

from .wire import PointCloud


def dense_frequencies(fs: float, n_fft: int) -> np.ndarray:
    return np.arange(n_fft // 2 + 1) * (fs / n_fft)


def transfer_spectrum(magnitudes, path_length: float, bin_freqs, fs: float, n_fft: int,
                      c: float = 343.0) -> np.ndarray:
    """Complex half-spectrum of one contribution."""
    dense = dense_frequencies(fs, n_fft)
    if path_length / c > n_fft / fs:
        raise ValueError("delay exceeds the transform span; enlarge n_fft")
    mag = np.interp(dense, np.asarray(bin_freqs, float),
                    np.asarray(magnitudes, float))  # np.interp clamps at the ends
    h = mag * np.exp(-2j * np.pi * dense * (path_length / c))
    h[0] = h[0].real
    h[-1] = h[-1].real
    return h


def impulse_response(cloud: PointCloud, source: int, receiver: int, bin_freqs,
                     fs: float, n_fft: int, c: float = 343.0) -> np.ndarray:
    """Pair impulse response: all mechanisms summed in the frequency domain."""
    rows = cloud.pair_rows(source, receiver)
    total = np.zeros(n_fft // 2 + 1, dtype=np.complex128)
    for i in rows:
        total += transfer_spectrum(
            cloud.magnitude[i], float(cloud.path_length[i]), bin_freqs, fs, n_fft, c
        )
    total[0] = total[0].real
    total[-1] = total[-1].real
    return np.fft.irfft(total, n=n_fft)


def all_impulse_responses(cloud: PointCloud, bin_freqs, fs: float, n_fft: int,
                          c: float = 343.0) -> dict[tuple[int, int], np.ndarray]:
    return {
        (s, m): impulse_response(cloud, s, m, bin_freqs, fs, n_fft, c)
        for s in range(cloud.n_sources)
        for m in range(cloud.n_receivers)
    }


def render(impulse: np.ndarray, emitted: np.ndarray) -> np.ndarray:
    """Received signal: full linear convolution with the emitted call."""
    return np.convolve(np.asarray(impulse, float), np.asarray(emitted, float), mode="full")
