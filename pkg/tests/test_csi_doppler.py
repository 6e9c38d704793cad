import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import DetectorConfig, SceneConfig
from csi_doppler import (
    CsiWindow,
    MultipathConfig,
    Spectrogram,
    bin_frequencies,
    csi_ratio,
    detect_doppler,
    detect_doppler_series,
    stft_spectrogram,
    synthesize_csi,
)
from errors import AliasedDoppler, CsiTooShort, DataContractError, NearZeroDenominator, WindowTooLong

SCENE = SceneConfig()
DETECTOR = DetectorConfig()
BIN_WIDTH = SCENE.fs / DETECTOR.n_fft


def tone(frequency, length=129):
    q = np.arange(length)
    return np.exp(-2j * np.pi * frequency * q * SCENE.dt)


def test_bin_frequencies_read_out():
    freqs = bin_frequencies(256, 100.0)
    assert freqs[0] == 0.0
    assert freqs[64] == pytest.approx(25.0)
    assert freqs[127] == pytest.approx(127 * 100 / 256)
    assert freqs[128] == pytest.approx(-50.0)
    assert freqs[192] == pytest.approx(-25.0)


def test_positive_tone_lands_on_positive_bin():
    spec = stft_spectrogram(tone(25.0), 256, fs=SCENE.fs)
    detection = detect_doppler(spec)
    assert detection.bin == 64
    assert detection.frequency == pytest.approx(25.0)


def test_negative_tone_lands_on_negative_bin():
    detection = detect_doppler(stft_spectrogram(tone(-25.0), 256, fs=SCENE.fs))
    assert detection.bin == 192
    assert detection.frequency == pytest.approx(-25.0)


def test_flat_spectrum_reports_zero():
    spec = Spectrogram(magnitudes=np.zeros(256), n_fft=256, fs=SCENE.fs)
    assert detect_doppler(spec).frequency == 0.0


def test_guard_band_excludes_dc():
    magnitudes = np.zeros(256)
    magnitudes[0] = 100.0
    magnitudes[20] = 5.0
    detection = detect_doppler(Spectrogram(magnitudes=magnitudes, n_fft=256, fs=SCENE.fs), f_guard=2.0)
    assert detection.bin == 20


def test_window_longer_than_fft_is_rejected():
    with pytest.raises(WindowTooLong):
        stft_spectrogram(tone(10.0, length=300), 256)


def test_aliased_doppler_is_rejected():
    config = MultipathConfig(static_paths=[[1.0], [1.0]], target_gain=[0.3, 0.3])
    with pytest.raises(AliasedDoppler):
        synthesize_csi(np.full(50, 60.0), config, SCENE)


def test_los_must_dominate_target_path():
    with pytest.raises(ValueError):
        MultipathConfig(static_paths=[[0.2], [1.0]], target_gain=[0.3, 0.3])


def test_csi_ratio_near_zero_denominator_reports_q():
    samples = np.ones((2, 9), dtype=complex)
    samples[1, 3] = 0.0
    window = CsiWindow(samples=samples, center_index=20, q_half=4)
    with pytest.raises(NearZeroDenominator) as info:
        csi_ratio(window)
    assert info.value.q == 19


def test_phase_offset_cancels_in_ratio():
    rng = np.random.default_rng(5)
    series = np.full(129, 12.5)
    base = MultipathConfig.random(rng, phase_offset_seed=None)
    offset = MultipathConfig(static_paths=base.static_paths, target_gain=base.target_gain, phase_offset_seed=99)
    clean = synthesize_csi(series, base, SCENE)
    noisy = synthesize_csi(series, offset, SCENE)
    assert not np.allclose(clean, noisy)
    np.testing.assert_allclose(noisy[0] / noisy[1], clean[0] / clean[1], rtol=1e-12)


def test_static_scene_detects_zero():
    config = MultipathConfig.random(np.random.default_rng(1), phase_offset_seed=3)
    stream = synthesize_csi(np.zeros(300), config, SCENE)
    frequencies, available = detect_doppler_series(stream, DETECTOR, SCENE)
    assert np.all(frequencies[available] == 0.0)


def test_series_edges_are_unavailable():
    config = MultipathConfig.random(np.random.default_rng(2), phase_offset_seed=4)
    stream = synthesize_csi(np.full(300, 15.0), config, SCENE)
    _, available = detect_doppler_series(stream, DETECTOR, SCENE)
    q = DETECTOR.q_half
    assert not available[:q].any()
    assert not available[-q:].any()
    assert available[q:300 - q].all()


def test_amplitude_threshold_marks_weak_windows_unavailable():
    config = MultipathConfig(static_paths=[[0.5], [0.5]], target_gain=[0.1, 0.1])
    stream = synthesize_csi(np.full(200, 10.0), config, SCENE)
    weak = DetectorConfig(amplitude_threshold=2.0)
    _, available = detect_doppler_series(stream, weak, SCENE)
    assert not available.any()


@settings(max_examples=100, deadline=None)
@given(
    magnitude=st.floats(min_value=3.0, max_value=45.0),
    negative=st.booleans(),
    seed=st.integers(min_value=0, max_value=2**31 - 2),
)
def test_tone_recovered_within_one_bin_under_phase_offsets(magnitude, negative, seed):
    frequency = -magnitude if negative else magnitude
    rng = np.random.default_rng(seed)
    config = MultipathConfig.random(rng, phase_offset_seed=seed)
    length = 2 * DETECTOR.q_half + 1
    stream = synthesize_csi(np.full(length, frequency), config, SCENE)
    frequencies, available = detect_doppler_series(stream, DETECTOR, SCENE)
    centre = DETECTOR.q_half
    assert available[centre]
    assert abs(frequencies[centre] - frequency) <= BIN_WIDTH


@pytest.mark.parametrize("window_fn", ["rectangular", "hann"])
def test_spectrogram_matches_direct_transform(window_fn):
    rng = np.random.default_rng(21)
    length = 2 * DETECTOR.q_half + 1
    ratio = rng.normal(size=length) + 1j * rng.normal(size=length)
    weights = np.ones(length) if window_fn == "rectangular" else np.hanning(length)
    i = np.arange(length)[:, None]
    xi = np.arange(DETECTOR.n_fft)[None, :]
    kernel = np.exp(2j * np.pi * (i + DETECTOR.q_half) * xi / DETECTOR.n_fft)
    direct = np.abs((weights * ratio) @ kernel)
    spec = stft_spectrogram(ratio, DETECTOR.n_fft, window_fn=window_fn, fs=SCENE.fs)
    np.testing.assert_allclose(spec.magnitudes, direct, rtol=0, atol=1e-9)


def test_detection_ignores_a_common_phase_offset():
    base = MultipathConfig.random(np.random.default_rng(8), phase_offset_seed=None)
    offset = MultipathConfig(static_paths=base.static_paths, target_gain=base.target_gain, phase_offset_seed=77)
    series = 15.0 * np.sin(np.linspace(0.0, 3.0, 400))
    clean = detect_doppler_series(synthesize_csi(series, base, SCENE), DETECTOR, SCENE)
    shifted = detect_doppler_series(synthesize_csi(series, offset, SCENE), DETECTOR, SCENE)
    np.testing.assert_array_equal(shifted[0], clean[0])
    np.testing.assert_array_equal(shifted[1], clean[1])


def test_piecewise_tone_switches_sign():
    series = np.concatenate([np.full(300, 20.0), np.full(300, -20.0)])
    config = MultipathConfig.random(np.random.default_rng(12), phase_offset_seed=13)
    frequencies, available = detect_doppler_series(synthesize_csi(series, config, SCENE), DETECTOR, SCENE)
    q = DETECTOR.q_half
    first, second = slice(q, 300 - q), slice(300 + q, 600 - q)
    assert available[first].all() and available[second].all()
    assert np.all(np.abs(frequencies[first] - 20.0) <= BIN_WIDTH)
    assert np.all(np.abs(frequencies[second] + 20.0) <= BIN_WIDTH)


def test_synthesis_is_deterministic():
    config = MultipathConfig.random(np.random.default_rng(4), phase_offset_seed=5)
    series = np.linspace(-10.0, 10.0, 200)
    np.testing.assert_array_equal(synthesize_csi(series, config, SCENE), synthesize_csi(series, config, SCENE))


def test_antenna_one_without_phase_offset_is_static_sum_plus_target_phasor():
    config = MultipathConfig(static_paths=[[1.0, 0.1j], [0.8, 0.05]], target_gain=[0.3, 0.2])
    stream = synthesize_csi(np.full(100, 20.0), config, SCENE)
    q = np.arange(100)
    expected = config.static_sum[0] + config.target_gain[0] * np.exp(-2j * np.pi * 20.0 * q * SCENE.dt)
    np.testing.assert_allclose(stream[0], expected, rtol=1e-12, atol=1e-12)


def test_stream_shorter_than_a_window_is_a_data_error():
    with pytest.raises(CsiTooShort) as info:
        detect_doppler_series(np.ones((2, 20), dtype=complex), DETECTOR, SCENE)
    assert isinstance(info.value, DataContractError)
    assert info.value.window == 2 * DETECTOR.q_half + 1
