"""Deterministic signal-processing primitives.

Butterworth band-pass design and causal filtering, anti-aliased decimation,
real Morlet wavelet construction with analytic parameter gradients, and a
Hann-windowed STFT for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import FilterDesignError, NumericalError

WAVELET_FREQ_MIN = 8.0
WAVELET_FREQ_MAX = 30.0
WAVELET_WIDTH_MIN = 1e-3


@dataclass(frozen=True)
class BiquadCascade:
    """Cascade of second-order IIR sections (scipy SOS layout, a0 = 1)."""

    sections: np.ndarray          # n_sections x 6: b0 b1 b2 1 a1 a2
    design_band: tuple[float, float]
    order: int
    sample_rate_hz: float

    def response(self, freq_hz) -> np.ndarray:
        """Cascade magnitude response |H| evaluated on the unit circle."""
        freq_hz = np.atleast_1d(np.asarray(freq_hz, dtype=np.float64))
        z = np.exp(-1j * 2 * np.pi * freq_hz / self.sample_rate_hz)
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sections:
            h *= (b0 + b1 * z + b2 * z ** 2) / (1 + a1 * z + a2 * z ** 2)
        return np.abs(h)


def design_bandpass(low_hz: float, high_hz: float, order: int,
                    fs: float) -> BiquadCascade:
    """Butterworth band-pass via analog prototype + bilinear transform."""
    nyquist = fs / 2.0
    if not (0 < low_hz < high_hz < nyquist):
        raise FilterDesignError(
            f"band edges ({low_hz}, {high_hz}) must satisfy 0 < low < high < {nyquist}")
    if order < 1:
        raise FilterDesignError("filter order must be >= 1")
    sos = sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    cascade = BiquadCascade(sos, (low_hz, high_hz), order, fs)
    poles = np.array([np.roots([1.0, a1, a2]) for _, _, _, _, a1, a2 in sos])
    if np.any(np.abs(poles) >= 1.0):
        raise FilterDesignError("unstable section in the designed cascade")
    return cascade


def filter_forward(cascade: BiquadCascade, x: np.ndarray) -> np.ndarray:
    """Causal single-pass direct-form-II-transposed filtering along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise NumericalError("empty input signal")
    finite = np.isfinite(x)
    if not finite.all():
        idx = np.argwhere(~finite)[0]
        raise NumericalError(f"non-finite sample at index {tuple(idx)}")
    return sps.sosfilt(cascade.sections, x, axis=-1)


def design_antialias(target_hz: float, fs: float, order: int = 12) -> np.ndarray:
    """Low-pass guard filter for decimation.

    Cut at 0.36 * target rate, order 12: steep enough to suppress the first
    alias region by >90% while keeping a 30 Hz band edge above 99%.
    """
    cutoff = 0.36 * target_hz
    if cutoff >= fs / 2:
        raise FilterDesignError("anti-alias cutoff at or beyond Nyquist")
    return sps.butter(order, cutoff, btype="lowpass", fs=fs, output="sos")


def trim_and_downsample(trial: np.ndarray, window_ms: tuple[int, int],
                        target_hz: int, fs: int = 1000) -> np.ndarray:
    """Extract a time window then decimate with an anti-alias low-pass.

    trial is C x T at `fs`; output is C x (window_samples * target_hz / fs).
    """
    trial = np.asarray(trial, dtype=np.float64)
    start_ms, end_ms = window_ms
    start = int(round(start_ms * fs / 1000))
    end = int(round(end_ms * fs / 1000))
    if not (0 <= start < end <= trial.shape[-1]):
        raise NumericalError(
            f"window {window_ms} ms exceeds trial length {trial.shape[-1]} samples")
    if fs % target_hz != 0:
        raise NumericalError(f"{fs} Hz not divisible by target {target_hz} Hz")
    window = trial[..., start:end]
    factor = fs // target_hz
    if factor == 1:
        return window.copy()
    sos = design_antialias(target_hz, fs)
    smoothed = sps.sosfilt(sos, window, axis=-1)
    return smoothed[..., ::factor]


@dataclass
class MorletParams:
    """Trainable real Morlet wavelet parameters."""

    f: float          # center frequency, Hz
    h: float          # Gaussian full width at half maximum, s
    c: float          # Gaussian exponent coefficient
    kernel_len: int
    fs: float

    def time_grid(self) -> np.ndarray:
        k = self.kernel_len
        return (np.arange(k) - k // 2) / self.fs


def build_morlet(params: MorletParams) -> np.ndarray:
    """w[n] = cos(2 pi f t[n]) * exp(-c t[n]^2 / h^2) on the centered grid."""
    if params.h <= 0:
        raise NumericalError(f"wavelet width must be positive, got {params.h}")
    t = params.time_grid()
    return np.cos(2 * np.pi * params.f * t) * np.exp(-params.c * t ** 2 / params.h ** 2)


def morlet_gradients(params: MorletParams,
                     upstream: np.ndarray) -> tuple[float, float, float]:
    """Analytic partials of the kernel w.r.t. (f, h, c), contracted upstream."""
    if params.h <= 0:
        raise NumericalError(f"wavelet width must be positive, got {params.h}")
    upstream = np.asarray(upstream, dtype=np.float64)
    t = params.time_grid()
    envelope = np.exp(-params.c * t ** 2 / params.h ** 2)
    phase = 2 * np.pi * params.f * t
    dw_df = -2 * np.pi * t * np.sin(phase) * envelope
    dw_dh = np.cos(phase) * envelope * (2 * params.c * t ** 2 / params.h ** 3)
    dw_dc = np.cos(phase) * envelope * (-t ** 2 / params.h ** 2)
    return (float(upstream @ dw_df), float(upstream @ dw_dh), float(upstream @ dw_dc))


def stft(x: np.ndarray, window_len: int, hop: int,
         fs: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hann-windowed short-time Fourier magnitude.

    Returns (magnitudes [bins x frames], freqs_hz, frame_start_times_s).
    """
    x = np.asarray(x, dtype=np.float64)
    if hop <= 0:
        raise NumericalError("hop must be positive")
    if window_len > x.shape[-1]:
        raise NumericalError("window longer than the signal")
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(window_len) / window_len)
    starts = np.arange(0, x.shape[-1] - window_len + 1, hop)
    frames = np.stack([x[s:s + window_len] * window for s in starts], axis=1)
    mags = np.abs(np.fft.rfft(frames, axis=0))
    freqs = np.fft.rfftfreq(window_len, d=1.0 / fs)
    return mags, freqs, starts / fs
