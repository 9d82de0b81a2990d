"""Spectral synthesis: transfer functions, impulse responses, rendering."""

import numpy as np
import pytest

from conftest import simple_plate_scene
from echotrace import pipeline
from echotrace.acoustics import Contribution, ContributionSet, KIND_PASSIVE
from echotrace.errors import AliasRisk, GridMismatch, SampleRateMismatch
from echotrace.synthesis import (
    GainTable,
    SpectralGrid,
    directional_gain,
    grid_for_scene,
    impulse_response,
    pair_impulse_response,
    render_signal,
    rms_temporal_spread,
    spectrogram,
    transfer_function,
    write_raw,
    read_raw,
    write_wav,
    read_wav,
)

C_AIR = 343.0


def contribution(r, mags, kind=KIND_PASSIVE, index=0):
    return Contribution(
        kind=kind, source_id="tx", receiver_id="rx",
        position=np.zeros(3), path_length=r, index=index,
        magnitudes=np.asarray(mags, dtype=np.float32),
    )


def single_pair_set(rows, n_bins, revision=0):
    n = len(rows)
    return ContributionSet(
        scene_revision=revision, source_ids=["tx"], receiver_ids=["rx"],
        n_bins=n_bins, n_specular_points=0, n_diffraction_points=0,
        kind=np.full(n, KIND_PASSIVE, np.uint8),
        source=np.zeros(n, np.uint32),
        receiver=np.zeros(n, np.uint32),
        position=np.zeros((n, 3)),
        path_length=np.array([r for r, _ in rows]),
        index=np.arange(n, dtype=np.uint32),
        magnitude=np.array([m for _, m in rows], np.float32).reshape(n, n_bins),
    )


def test_grid_validation():
    with pytest.raises(ValueError):
        SpectralGrid(fs=0.0, n_fft=8)
    with pytest.raises(ValueError):
        SpectralGrid(fs=1000.0, n_fft=100)  # not a power of two
    g = SpectralGrid(fs=1000.0, n_fft=16)
    assert g.frequencies[0] == 0.0
    assert g.frequencies[-1] == 500.0
    assert len(g.frequencies) == 9


def test_grid_for_scene_invariants():
    scene = simple_plate_scene(n_bins=3, freq_lo=25000.0, freq_hi=50000.0)
    grid = grid_for_scene(scene)
    assert grid.fs == 4.0 * 50000.0
    assert grid.fs > 2.0 * scene.frequencies[-1]
    needed = 2.0 * scene.emitters[0].max_range / scene.speed_of_sound
    assert grid.duration >= needed
    assert grid.n_fft & (grid.n_fft - 1) == 0
    with pytest.raises(ValueError):
        grid_for_scene(scene, fs=90000.0)  # below 2x the top bin


def test_transfer_identity():
    grid = SpectralGrid(fs=100000.0, n_fft=1024)
    sp = transfer_function(contribution(0.0, [1.0]), grid, C_AIR, np.array([40000.0]))
    assert np.allclose(sp.values, 1.0)
    h = np.fft.irfft(sp.values, n=grid.n_fft)
    assert np.argmax(np.abs(h)) == 0
    assert h[0] == pytest.approx(1.0, rel=1e-12)


def test_transfer_delay_peak_at_r_over_c():
    grid = SpectralGrid(fs=100000.0, n_fft=4096)
    sp = transfer_function(contribution(3.43, [1.0]), grid, C_AIR, np.array([40000.0]))
    h = np.fft.irfft(sp.values, n=grid.n_fft)
    assert np.argmax(np.abs(h)) == 1000  # 10 ms at 100 kHz


def test_transfer_magnitude_interpolation_anchors():
    grid = SpectralGrid(fs=100000.0, n_fft=4096)
    bins = np.array([10000.0, 20000.0, 30000.0])
    mags = np.array([1.0, 2.0, 3.0], dtype=np.float32)
    sp = transfer_function(contribution(0.0, mags), grid, C_AIR, bins)
    dense = grid.frequencies
    for f, m in zip(bins, mags):
        j = int(round(f / (grid.fs / grid.n_fft)))
        if abs(dense[j] - f) < 1e-9:  # bin center lands on a dense line
            assert abs(abs(sp.values[j]) - m) < 1e-9
    # flat extrapolation outside the coarse grid
    assert abs(sp.values[0]) == pytest.approx(1.0, abs=1e-12)
    assert abs(sp.values[-1]) == pytest.approx(3.0, abs=1e-9)


def test_transfer_alias_risk():
    grid = SpectralGrid(fs=100000.0, n_fft=256)  # 2.56 ms span
    with pytest.raises(AliasRisk):
        transfer_function(contribution(3.43, [1.0]), grid, C_AIR, np.array([40000.0]))


def test_impulse_response_superposition_peaks():
    grid = SpectralGrid(fs=100000.0, n_fft=4096)
    bins = np.array([40000.0])
    spectra = [
        transfer_function(contribution(1.715, [1.0]), grid, C_AIR, bins),
        transfer_function(contribution(3.43, [1.0]), grid, C_AIR, bins),
    ]
    h = impulse_response(spectra, "tx", "rx", grid)
    assert len(h.samples) == grid.n_fft
    d1 = round(100000.0 * 1.715 / C_AIR)
    d2 = round(100000.0 * 3.43 / C_AIR)
    assert abs(h.samples[d1]) == pytest.approx(abs(h.samples[d2]), rel=1e-6)
    order = np.argsort(np.abs(h.samples))[::-1][:2]
    assert set(order.tolist()) == {d1, d2}


def test_impulse_response_zero_contributions():
    grid = SpectralGrid(fs=100000.0, n_fft=512)
    h = impulse_response([], "tx", "rx", grid)
    assert np.array_equal(h.samples, np.zeros(512))


def test_impulse_response_grid_mismatch():
    g1 = SpectralGrid(fs=100000.0, n_fft=512)
    g2 = SpectralGrid(fs=100000.0, n_fft=1024)
    sp = transfer_function(contribution(0.1, [1.0]), g1, C_AIR, np.array([40000.0]))
    with pytest.raises(GridMismatch):
        impulse_response([sp], "tx", "rx", g2)


def test_linearity_oracle_50_random_contributions():
    # frequency-domain summation must equal per-contribution inverse
    # transforms summed in the time domain (linearity of the inverse FFT)
    rng = np.random.default_rng(8)
    grid = SpectralGrid(fs=200000.0, n_fft=8192)
    bins = np.linspace(25000.0, 50000.0, 5)
    rows = []
    for _ in range(50):
        r = rng.uniform(0.2, 6.0)
        mags = rng.uniform(0.0, 2.0, 5).astype(np.float32)
        rows.append((r, mags))
    contribs = single_pair_set(rows, n_bins=5)
    fast = pair_impulse_response(contribs, "tx", "rx", grid, C_AIR, bins)
    slow = np.zeros(grid.n_fft)
    for r, mags in rows:
        sp = transfer_function(contribution(r, mags), grid, C_AIR, bins)
        slow += np.fft.irfft(sp.values, n=grid.n_fft)
    scale = np.abs(slow).max()
    assert np.abs(fast.samples - slow).max() <= 1e-12 * scale


def test_superposition_of_sets():
    grid = SpectralGrid(fs=100000.0, n_fft=2048)
    bins = np.array([30000.0, 50000.0])
    rows_a = [(1.0, np.array([1.0, 0.5], np.float32))]
    rows_b = [(2.0, np.array([0.25, 0.75], np.float32))]
    ha = pair_impulse_response(single_pair_set(rows_a, 2), "tx", "rx", grid, C_AIR, bins)
    hb = pair_impulse_response(single_pair_set(rows_b, 2), "tx", "rx", grid, C_AIR, bins)
    hab = pair_impulse_response(single_pair_set(rows_a + rows_b, 2), "tx", "rx", grid, C_AIR, bins)
    assert np.abs(hab.samples - (ha.samples + hb.samples)).max() < 1e-12


def test_parseval_consistency():
    rng = np.random.default_rng(12)
    grid = SpectralGrid(fs=100000.0, n_fft=1024)
    bins = np.linspace(20000.0, 45000.0, 4)
    rows = [(rng.uniform(0.1, 1.5), rng.uniform(0, 1, 4).astype(np.float32)) for _ in range(10)]
    contribs = single_pair_set(rows, 4)
    h = pair_impulse_response(contribs, "tx", "rx", grid, C_AIR, bins)
    spec = np.fft.fft(h.samples)
    lhs = np.sum(h.samples**2)
    rhs = np.sum(np.abs(spec) ** 2) / grid.n_fft
    assert abs(lhs - rhs) / lhs < 1e-9


def test_delay_fidelity_fractional():
    # matched-filter envelope peak within 1 sample of fs*r/c, including
    # fractional delays (the phase term carries the sub-sample part)
    import scipy.signal

    grid = SpectralGrid(fs=100000.0, n_fft=8192)
    bins = np.array([20000.0, 50000.0])
    n_pulse = 256
    t = np.arange(n_pulse) / grid.fs
    pulse = np.sin(2 * np.pi * 35000.0 * t) * np.hanning(n_pulse)
    for r in (1.0, 1.23456, 2.000017, 3.4299999):
        h = pair_impulse_response(
            single_pair_set([(r, np.array([1.0, 1.0], np.float32))], 2),
            "tx", "rx", grid, C_AIR, bins,
        )
        corr = np.correlate(h.samples, pulse, mode="full")
        envelope = np.abs(scipy.signal.hilbert(corr))
        # with h ~ delta(n - d), the correlation envelope peaks at
        # k = d + (L-1)/2 (pulse envelope center)
        peak = np.argmax(envelope) - (n_pulse - 1) / 2.0
        expected = grid.fs * r / C_AIR
        assert abs(peak - expected) <= 1.0


def test_amplitude_linearity():
    grid = SpectralGrid(fs=100000.0, n_fft=2048)
    bins = np.array([40000.0])
    peaks = []
    for m in (0.1, 0.5, 1.0):
        h = pair_impulse_response(
            single_pair_set([(1.0, np.array([m], np.float32))], 1),
            "tx", "rx", grid, C_AIR, bins,
        )
        peaks.append(np.abs(h.samples).max())
    assert peaks[1] / peaks[0] == pytest.approx(5.0, rel=1e-6)
    assert peaks[2] / peaks[0] == pytest.approx(10.0, rel=1e-6)


def test_render_identity_and_shift():
    grid = SpectralGrid(fs=100000.0, n_fft=512)
    rng = np.random.default_rng(3)
    sig = rng.standard_normal(100)
    h = impulse_response([], "tx", "rx", grid)
    h.samples[0] = 1.0
    out = render_signal(h, sig, 100000.0)
    assert len(out.samples) == grid.n_fft + len(sig) - 1
    assert np.allclose(out.samples[: len(sig)], sig, atol=1e-15)
    h2 = impulse_response([], "tx", "rx", grid)
    a, d = 0.5, 37
    h2.samples[d] = a
    out2 = render_signal(h2, sig, 100000.0)
    assert np.allclose(out2.samples[d : d + len(sig)], a * sig, atol=1e-15)


def test_render_sample_rate_mismatch():
    grid = SpectralGrid(fs=100000.0, n_fft=512)
    h = impulse_response([], "tx", "rx", grid)
    with pytest.raises(SampleRateMismatch):
        render_signal(h, np.zeros(10), 48000.0)


def chirp(f0, f1, duration, fs):
    t = np.arange(int(round(duration * fs))) / fs
    k = (f1 - f0) / duration
    return np.sin(2 * np.pi * (f0 * t + 0.5 * k * t * t))


def test_chirp_through_single_echo_matched_filter():
    # 2.5 ms chirp sweeping 25-50 kHz through an echo at 10 ms: the
    # matched filter of the rendered signal peaks at the echo delay
    fs = 100000.0
    grid = SpectralGrid(fs=fs, n_fft=4096)
    bins = np.linspace(25000.0, 50000.0, 14)
    r = 3.43  # 10 ms at 343 m/s
    h = pair_impulse_response(
        single_pair_set([(r, np.ones(14, np.float32))], 14), "tx", "rx", grid, C_AIR, bins
    )
    call = chirp(25000.0, 50000.0, 0.0025, fs)
    out = render_signal(h, call, fs)
    corr = np.correlate(out.samples, call, mode="valid")
    peak = int(np.argmax(np.abs(corr)))
    assert abs(peak - 1000) <= 1


def test_directional_gain_identity_and_mask():
    c = contribution(1.0, [2.0, 4.0])
    assert directional_gain(c, (0.0, np.pi / 2), None) is c
    table = GainTable(
        azimuth=np.array([-np.pi, 0.0, np.pi]),
        elevation=np.array([-np.pi / 2, 0.0, np.pi / 2]),
        gains=np.concatenate([
            np.zeros((3, 1, 2)),  # below horizon: zeroed
            np.ones((3, 1, 2)),
            np.ones((3, 1, 2)),
        ], axis=1),
    )
    front = directional_gain(c, (0.0, np.pi / 2), table)
    assert np.array_equal(front.magnitudes, c.magnitudes)
    rear = directional_gain(c, (0.0, -np.pi / 2), table)
    assert np.array_equal(rear.magnitudes, np.zeros(2, np.float32))


def test_directional_gain_cosine_lobe():
    # gain table encoding cos(angle off boresight); 60 degrees off-axis halves M
    el = np.linspace(-np.pi / 2, np.pi / 2, 181)
    gains = np.maximum(0.0, np.sin(el))[None, :, None] * np.ones((1, 1, 1))
    table = GainTable(azimuth=np.array([0.0]), elevation=el, gains=gains)
    c = contribution(1.0, [1.0])
    on_axis = directional_gain(c, (0.0, np.pi / 2), table)
    assert float(on_axis.magnitudes[0]) == pytest.approx(1.0, abs=1e-6)
    off60 = directional_gain(c, (0.0, np.pi / 2 - np.pi / 3), table)
    assert float(off60.magnitudes[0]) == pytest.approx(0.5, abs=1e-3)


def test_wav_raw_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    sig = rng.standard_normal(1000)
    write_wav(tmp_path / "x.wav", sig, 100000.0)
    back, fs = read_wav(tmp_path / "x.wav")
    assert fs == 100000.0
    assert np.abs(back - sig).max() < 1e-6  # float32 storage
    write_raw(tmp_path / "x.f64", sig)
    raw = read_raw(tmp_path / "x.f64")
    assert np.array_equal(raw, sig)


def test_rms_temporal_spread_orders_multipath():
    fs = 100000.0
    single = np.zeros(4096)
    single[1000] = 1.0
    multi = np.zeros(4096)
    multi[[1000, 1400, 2200, 3000]] = [1.0, 0.7, 0.5, 0.4]
    assert rms_temporal_spread(multi, fs) > rms_temporal_spread(single, fs)
    assert rms_temporal_spread(single, fs) == 0.0


def test_spectrogram_shapes():
    fs = 100000.0
    sig = chirp(25000.0, 50000.0, 0.01, fs)
    freqs, times, sxx = spectrogram(sig, fs, nperseg=128)
    assert sxx.shape == (len(freqs), len(times))
    band = (freqs >= 25000.0) & (freqs <= 50000.0)
    assert sxx[band].sum() > 0.9 * sxx.sum()  # energy confined to the sweep band
