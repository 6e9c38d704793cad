# scripts/csi_doppler.py
"""
Synthetic two-antenna CSI and ratio-based Doppler detection.

Each station's CSI is a quasi-static sum of static paths plus one path
scattered off the target, all multiplied by a common per-interval hardware
phase offset. Dividing antenna 1 by antenna 2 cancels that offset; an STFT of
the ratio over a sliding window of 2Q+1 intervals, followed by peak picking
outside a small guard band around DC, yields the Doppler frequency of the
window's centre interval.

Sign convention: the target phasor rotates as exp(-j 2 pi f t), and the
spectrogram kernel is exp(+j 2 pi (i+Q) xi / N_FFT), so a positive Doppler
lands on a positive-frequency bin.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import AliasedDoppler, CsiTooShort, NearZeroDenominator, WindowTooLong

logger = logging.getLogger(__name__)

ANTENNAS = 2


@dataclass(frozen=True, eq=False)
class MultipathConfig:
    """Per-antenna path gains and the seed of the hardware phase offset.

    static_paths[p][0] is the LoS gain of antenna p; the remaining entries are
    static NLoS paths. phase_offset_seed=None disables the phase offset.
    """
    static_paths: np.ndarray
    target_gain: np.ndarray
    phase_offset_seed: int | None = None

    def __post_init__(self):
        static = np.array(self.static_paths, dtype=complex).reshape(ANTENNAS, -1)
        target = np.array(self.target_gain, dtype=complex).reshape(ANTENNAS)
        object.__setattr__(self, "static_paths", static)
        object.__setattr__(self, "target_gain", target)
        if static.shape[1] < 1:
            raise ValueError("at least one static path (the LoS path) is required")
        if np.any(np.abs(static[:, 0]) <= np.abs(target)):
            raise ValueError("static LoS gain must dominate the target-path gain on both antennas")

    @property
    def static_sum(self):
        return self.static_paths.sum(axis=1)

    @classmethod
    def random(cls, rng, static_gain=1.0, target_gain=0.3, n_static_paths=3, phase_offset_seed=None):
        """Random path phases; NLoS static paths are kept weak so the static sum dominates."""
        n_static_paths = max(1, n_static_paths)
        phases = rng.uniform(0.0, 2 * np.pi, size=(ANTENNAS, n_static_paths))
        magnitudes = np.full((ANTENNAS, n_static_paths), 0.1 * abs(static_gain))
        magnitudes[:, 0] = abs(static_gain)
        static = magnitudes * np.exp(1j * phases)
        target = abs(target_gain) * np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=ANTENNAS))
        return cls(static_paths=static, target_gain=target, phase_offset_seed=phase_offset_seed)


@dataclass(frozen=True, eq=False)
class CsiWindow:
    samples: np.ndarray  # (2, 2Q+1) complex
    center_index: int
    q_half: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != (ANTENNAS, 2 * self.q_half + 1):
            raise ValueError(f"CSI window must be 2 x {2 * self.q_half + 1}, got {samples.shape}")
        if 2 * self.q_half + 1 < 8:
            raise ValueError("CSI window must hold at least 8 intervals")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    magnitudes: np.ndarray
    n_fft: int
    fs: float

    def frequencies(self):
        return bin_frequencies(self.n_fft, self.fs)


@dataclass(frozen=True)
class DetectedDoppler:
    frequency: float
    peak_magnitude: float
    bin: int


def bin_frequencies(n_fft, fs):
    """Bin -> Hz read-out: xi*fs/N below N/2, xi*fs/N - fs from N/2 on."""
    bins = np.arange(n_fft)
    freqs = bins * fs / n_fft
    return np.where(bins < n_fft / 2, freqs, freqs - fs)


def synthesize_csi(true_doppler_series, config, scene):
    """
    Generate a 2-antenna CSI stream, one sample per interval.

    The target phasor accumulates phase interval by interval, so a constant
    Doppler f gives exp(-j 2 pi f q dt) exactly.

    Returns:
        ndarray: (2, K) complex CSI samples.
    """
    f = np.asarray(true_doppler_series, dtype=float).reshape(-1)
    if not np.all(np.isfinite(f)):
        raise ValueError("Doppler series holds non-finite values")
    nyquist = scene.fs / 2
    if np.any(np.abs(f) >= nyquist):
        q = int(np.argmax(np.abs(f) >= nyquist))
        raise AliasedDoppler(f"|f|={abs(f[q]):.2f} Hz >= fs/2={nyquist:.2f} Hz at q={q}")

    cycles = np.concatenate([[0.0], np.cumsum(f * scene.dt)[:-1]])
    if config.phase_offset_seed is None:
        omega = np.zeros(len(f))
    else:
        omega = np.random.default_rng(config.phase_offset_seed).uniform(0.0, 1.0, size=len(f))

    target_phasor = np.exp(-2j * np.pi * cycles)
    common = np.exp(-2j * np.pi * omega)
    channel = config.static_sum[:, None] + config.target_gain[:, None] * target_phasor[None, :]
    return common[None, :] * channel


def csi_ratio(window, eps_ratio=1e-12):
    """R(q) = H1(q) / H2(q) over the window; the common phase offset cancels."""
    samples = window.samples
    small = np.abs(samples[1]) <= eps_ratio
    if np.any(small):
        i = int(np.argmax(small))
        raise NearZeroDenominator(window.center_index - window.q_half + i)
    return samples[0] / samples[1]


def _window_weights(length, window_fn):
    if window_fn == "rectangular":
        return np.ones(length)
    if window_fn == "hann":
        return np.hanning(length)
    raise ValueError(f"unknown window function {window_fn!r}")


def stft_spectrogram(ratio, n_fft, window_fn="rectangular", fs=100.0):
    """Magnitude of the zero-padded windowed transform of one ratio window."""
    ratio = np.asarray(ratio, dtype=complex).reshape(-1)
    if len(ratio) > n_fft:
        raise WindowTooLong(f"window of {len(ratio)} samples exceeds N_FFT={n_fft}")
    weighted = _window_weights(len(ratio), window_fn) * ratio
    magnitudes = np.abs(np.fft.ifft(weighted, n_fft) * n_fft)
    return Spectrogram(magnitudes=magnitudes, n_fft=n_fft, fs=fs)


def detect_doppler(spec, f_guard=2.0, flat_tol=1e-9):
    """
    Pick the strongest bin outside the DC guard band.

    When nothing outside the guard band rises above flat_tol (relative to the
    overall peak, floored at 1), the window is static and 0 Hz is reported.
    """
    magnitudes = np.asarray(spec.magnitudes, dtype=float)
    freqs = bin_frequencies(spec.n_fft, spec.fs)
    allowed = np.abs(freqs) >= f_guard if f_guard > 0 else np.ones(len(freqs), dtype=bool)

    overall = float(magnitudes.max()) if len(magnitudes) else 0.0
    if not np.any(allowed) or magnitudes[allowed].max() <= flat_tol * max(overall, 1.0):
        return DetectedDoppler(frequency=0.0, peak_magnitude=float(magnitudes[0]), bin=0)

    candidates = np.where(allowed, magnitudes, -np.inf)
    peak = int(np.argmax(candidates))
    return DetectedDoppler(frequency=float(freqs[peak]), peak_magnitude=float(magnitudes[peak]), bin=peak)


def window_spectrograms(csi_stream, detector, scene):
    """Spectrogram magnitudes for every centred window: (num_windows, N_FFT), plus window centres."""
    stream = np.asarray(csi_stream, dtype=complex)
    q = detector.q_half
    length = 2 * q + 1
    if length > detector.n_fft:
        raise WindowTooLong(f"window of {length} samples exceeds N_FFT={detector.n_fft}")
    if stream.shape[0] != ANTENNAS or stream.shape[1] < length:
        raise CsiTooShort(stream.shape, length)
    small = np.abs(stream[1]) <= detector.eps_ratio
    if np.any(small):
        raise NearZeroDenominator(int(np.argmax(small)))

    ratio = stream[0] / stream[1]
    windows = sliding_window_view(ratio, length)
    if detector.detrend:
        windows = windows - windows.mean(axis=1, keepdims=True)
    weighted = windows * _window_weights(length, detector.window)[None, :]
    magnitudes = np.abs(np.fft.ifft(weighted, detector.n_fft, axis=1) * detector.n_fft)
    centres = np.arange(q, stream.shape[1] - q)
    return magnitudes, centres


def detect_doppler_series(csi_stream, detector, scene):
    """
    Sliding-window detection over one station's CSI stream.

    Returns:
        (ndarray, ndarray): per-interval frequencies (Hz) and availability;
        the first and last Q intervals have no centred window and are unavailable.
    """
    stream = np.asarray(csi_stream, dtype=complex)
    num = stream.shape[1]
    magnitudes, centres = window_spectrograms(stream, detector, scene)

    frequencies = np.zeros(num)
    available = np.zeros(num, dtype=bool)
    amplitude = np.abs(stream[0])
    for row, n in enumerate(centres):
        spec = Spectrogram(magnitudes=magnitudes[row], n_fft=detector.n_fft, fs=scene.fs)
        detection = detect_doppler(spec, f_guard=detector.f_guard)
        frequencies[n] = detection.frequency
        available[n] = True
        if detector.amplitude_threshold is not None:
            window_level = amplitude[n - detector.q_half:n + detector.q_half + 1].mean()
            if window_level < detector.amplitude_threshold:
                available[n] = False
                frequencies[n] = 0.0
    logger.debug(f"Detected {int(available.sum())}/{num} intervals")
    return frequencies, available
