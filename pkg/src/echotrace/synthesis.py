"""Spectral synthesis: contributions -> transfer functions -> time signals.

Each contribution becomes a complex half-spectrum |H| * exp(-j w r / c):
magnitudes linearly interpolated from the coarse material bins onto the
dense FFT grid (flat extrapolation outside), phase encoding the
propagation delay so energy arrives at +r/c. Spectra for a source to
receiver pair add in the frequency domain, and one inverse real FFT yields
the pair's impulse response. Received signals are full linear convolutions
of impulse responses with the emitted waveform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .acoustics import Contribution, ContributionSet
from .errors import AliasRisk, GridMismatch, SampleRateMismatch

SYNTH_CHUNK = 2048  # contribution rows synthesized per vectorized block


@dataclass(frozen=True)
class SpectralGrid:
    """Dense transform grid: fs in Hz, n_fft a power of two."""

    fs: float
    n_fft: int

    def __post_init__(self):
        if self.fs <= 0.0:
            raise ValueError("sample rate must be > 0")
        if self.n_fft < 2 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ValueError("n_fft must be a power of two >= 2")

    @property
    def frequencies(self) -> np.ndarray:
        """Non-negative FFT bin centers f_j = j * fs / n_fft."""
        return np.arange(self.n_fft // 2 + 1) * (self.fs / self.n_fft)

    @property
    def duration(self) -> float:
        return self.n_fft / self.fs

    def to_dict(self) -> dict:
        return {"fs": self.fs, "n_fft": self.n_fft}


def grid_for_scene(scene, fs: float | None = None, signal_duration: float = 0.0) -> SpectralGrid:
    """Pick a grid covering the scene's band and longest round trip.

    fs defaults to 4x the highest material bin and must stay above 2x it;
    n_fft is the smallest power of two whose duration holds twice the
    maximum propagation length plus the emitted signal.
    """
    top = float(scene.frequencies[-1])
    if fs is None:
        fs = 4.0 * top
    # the top bin may sit exactly at Nyquist (it lands on the forced-real
    # Nyquist line); anything below that is unrepresentable
    if fs < 2.0 * top:
        raise ValueError(f"fs {fs} must cover twice the highest bin frequency {top}")
    max_range = max((e.max_range for e in scene.emitters), default=1.0)
    needed = 2.0 * max_range / scene.speed_of_sound + signal_duration
    n_fft = 2
    while n_fft / fs < needed:
        n_fft *= 2
    return SpectralGrid(fs=float(fs), n_fft=n_fft)


@dataclass
class TransferSpectrum:
    """One contribution's complex half-spectrum on a specific grid."""

    grid: SpectralGrid
    values: np.ndarray  # (n_fft // 2 + 1,) complex128


@dataclass
class ImpulseResponse:
    source_id: str
    receiver_id: str
    samples: np.ndarray  # (n_fft,) float64
    fs: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("impulse response samples must be finite")


@dataclass
class RenderedSignal:
    receiver_id: str
    samples: np.ndarray
    fs: float


def _interp_weights(bin_freqs: np.ndarray, dense: np.ndarray):
    """Indices and weights mapping coarse bins onto the dense grid with
    flat extrapolation at both ends."""
    n = len(bin_freqs)
    if n == 1:
        idx = np.zeros(len(dense), dtype=np.int64)
        return idx, idx, np.zeros(len(dense))
    hi = np.searchsorted(bin_freqs, dense, side="right")
    lo = np.clip(hi - 1, 0, n - 1)
    hi = np.clip(hi, 0, n - 1)
    denom = bin_freqs[hi] - bin_freqs[lo]
    w = np.where(denom > 0.0, (dense - bin_freqs[lo]) / np.where(denom > 0, denom, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)
    return lo, hi, w


def transfer_function(
    contribution: Contribution, grid: SpectralGrid, c: float, bin_freqs: np.ndarray
) -> TransferSpectrum:
    """H(f) = M(f) * exp(-j 2 pi f r / c), Hermitian-ready half spectrum.

    The negative phase sign makes the inverse transform causal: the
    time-domain peak lands at +r/c. Raises AliasRisk when the delay
    exceeds the grid span.
    """
    r = contribution.path_length
    delay = r / c
    if delay > grid.duration:
        raise AliasRisk(
            f"delay {delay:.6f}s exceeds grid span {grid.duration:.6f}s; enlarge n_fft"
        )
    dense = grid.frequencies
    lo, hi, w = _interp_weights(np.asarray(bin_freqs, dtype=np.float64), dense)
    m = contribution.magnitudes.astype(np.float64)
    dense_m = m[lo] * (1.0 - w) + m[hi] * w
    h = dense_m * np.exp(-2j * np.pi * dense * delay)
    h[0] = h[0].real
    h[-1] = h[-1].real  # Nyquist forced real so the inverse transform is real
    return TransferSpectrum(grid=grid, values=h)


def impulse_response(
    spectra: list[TransferSpectrum], source_id: str, receiver_id: str, grid: SpectralGrid
) -> ImpulseResponse:
    """Sum spectra in the frequency domain and invert once.

    By linearity this equals summing per-contribution time responses; the
    real FFT inverse guarantees a real result.
    """
    total = np.zeros(grid.n_fft // 2 + 1, dtype=np.complex128)
    for sp in spectra:
        if sp.grid != grid:
            raise GridMismatch("all spectra must share one spectral grid")
        total += sp.values
    samples = np.fft.irfft(total, n=grid.n_fft)
    return ImpulseResponse(source_id=source_id, receiver_id=receiver_id, samples=samples, fs=grid.fs)


def pair_impulse_response(
    contribs: ContributionSet,
    source_id: str,
    receiver_id: str,
    grid: SpectralGrid,
    c: float,
    bin_freqs: np.ndarray,
) -> ImpulseResponse:
    """Impulse response for one (source, receiver) pair, all mechanisms summed."""
    mask = contribs.pair_mask(source_id, receiver_id)
    idx = np.nonzero(mask)[0]
    dense = grid.frequencies
    lo, hi, w = _interp_weights(np.asarray(bin_freqs, dtype=np.float64), dense)
    total = np.zeros(len(dense), dtype=np.complex128)
    max_delay = grid.duration
    for start in range(0, len(idx), SYNTH_CHUNK):
        rows = idx[start : start + SYNTH_CHUNK]
        r = contribs.path_length[rows]
        if np.any(r / c > max_delay):
            raise AliasRisk("a contribution delay exceeds the grid span; enlarge n_fft")
        m = contribs.magnitude[rows].astype(np.float64)
        dense_m = m[:, lo] * (1.0 - w)[None, :] + m[:, hi] * w[None, :]
        phase = np.exp(-2j * np.pi * dense[None, :] * (r / c)[:, None])
        total += (dense_m * phase).sum(axis=0)
    total[0] = total[0].real
    total[-1] = total[-1].real
    samples = np.fft.irfft(total, n=grid.n_fft)
    return ImpulseResponse(source_id=source_id, receiver_id=receiver_id, samples=samples, fs=grid.fs)


def render_signal(h: ImpulseResponse, emitted: np.ndarray, emitted_fs: float) -> RenderedSignal:
    """Full linear convolution of the impulse response with the emitted call."""
    if emitted_fs != h.fs:
        raise SampleRateMismatch(f"signal fs {emitted_fs} != impulse response fs {h.fs}")
    out = np.convolve(h.samples, np.asarray(emitted, dtype=np.float64), mode="full")
    return RenderedSignal(receiver_id=h.receiver_id, samples=out, fs=h.fs)


def render_receiver(
    responses: list[ImpulseResponse], emitted: np.ndarray, emitted_fs: float
) -> RenderedSignal:
    """Sum the per-source renders arriving at one receiver."""
    if not responses:
        raise ValueError("at least one impulse response is required")
    receiver = responses[0].receiver_id
    total = None
    for h in responses:
        if h.receiver_id != receiver:
            raise ValueError("responses must target the same receiver")
        part = render_signal(h, emitted, emitted_fs)
        total = part.samples if total is None else total + part.samples
    return RenderedSignal(receiver_id=receiver, samples=total, fs=emitted_fs)


# -- directional gain hook ----------------------------------------------------


@dataclass
class GainTable:
    """Per-direction, per-bin emission gains in the emitter frame.

    Azimuth is atan2(y, x) in (-pi, pi], elevation asin(z) in
    [-pi/2, pi/2]; the boresight (+Z) sits at elevation +pi/2. Lookup is
    bilinear with flat clamping outside the grid.
    """

    azimuth: np.ndarray  # (na,) ascending
    elevation: np.ndarray  # (ne,) ascending
    gains: np.ndarray  # (na, ne, F)

    def __post_init__(self):
        self.azimuth = np.asarray(self.azimuth, dtype=np.float64)
        self.elevation = np.asarray(self.elevation, dtype=np.float64)
        self.gains = np.asarray(self.gains, dtype=np.float64)
        if self.gains.shape[:2] != (len(self.azimuth), len(self.elevation)):
            raise ValueError("gain grid shape must be (n_azimuth, n_elevation, n_bins)")

    def lookup(self, azimuth: float, elevation: float) -> np.ndarray:
        a = self._axis_weights(self.azimuth, azimuth)
        e = self._axis_weights(self.elevation, elevation)
        (ia, ja, wa), (ie, je, we) = a, e
        return (
            self.gains[ia, ie] * (1 - wa) * (1 - we)
            + self.gains[ja, ie] * wa * (1 - we)
            + self.gains[ia, je] * (1 - wa) * we
            + self.gains[ja, je] * wa * we
        )

    @staticmethod
    def _axis_weights(axis: np.ndarray, value: float):
        if len(axis) == 1:
            return 0, 0, 0.0
        j = int(np.searchsorted(axis, value, side="right"))
        i = min(max(j - 1, 0), len(axis) - 1)
        j = min(j, len(axis) - 1)
        if i == j:
            return i, j, 0.0
        w = (value - axis[i]) / (axis[j] - axis[i])
        return i, j, float(min(max(w, 0.0), 1.0))


def directional_gain(
    contribution: Contribution, emitter_frame_angles: tuple[float, float], gain_table: GainTable | None
) -> Contribution:
    """Scale a contribution's magnitudes by the emission gain toward its
    departure direction. A missing table is the unity hook."""
    if gain_table is None:
        return contribution
    az, el = emitter_frame_angles
    g = gain_table.lookup(az, el)
    scaled = (contribution.magnitudes.astype(np.float64) * g).astype(np.float32)
    return Contribution(
        kind=contribution.kind,
        source_id=contribution.source_id,
        receiver_id=contribution.receiver_id,
        position=contribution.position,
        path_length=contribution.path_length,
        index=contribution.index,
        magnitudes=scaled,
    )


# -- analysis / export ----------------------------------------------------------


def spectrogram(samples: np.ndarray, fs: float, nperseg: int = 256, noverlap: int | None = None):
    """Magnitude spectrogram (freqs Hz, times s, |STFT|)."""
    freqs, times, sxx = scipy.signal.spectrogram(
        np.asarray(samples, dtype=np.float64),
        fs=fs,
        nperseg=nperseg,
        noverlap=noverlap,
        mode="magnitude",
    )
    return freqs, times, sxx


def rms_temporal_spread(samples: np.ndarray, fs: float) -> float:
    """Energy-weighted standard deviation of arrival time, in seconds."""
    e = np.asarray(samples, dtype=np.float64) ** 2
    total = e.sum()
    if total == 0.0:
        return 0.0
    t = np.arange(len(e)) / fs
    mean = (t * e).sum() / total
    return float(np.sqrt(((t - mean) ** 2 * e).sum() / total))


def write_wav(path, samples: np.ndarray, fs: float) -> None:
    """32-bit float WAV, one channel."""
    scipy.io.wavfile.write(path, int(round(fs)), np.asarray(samples, dtype=np.float32))


def read_wav(path) -> tuple[np.ndarray, float]:
    fs, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    if data.ndim > 1:
        data = data[:, 0]
    return data, float(fs)


def write_raw(path, samples: np.ndarray) -> None:
    """Raw little-endian float64 samples."""
    np.asarray(samples, dtype="<f8").tofile(path)


def read_raw(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f8")
