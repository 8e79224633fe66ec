"""Magnitude spectrogram front end for audio separation.

Frames are periodic-Hann windowed at 50% overlap, which satisfies the
constant-overlap-add condition, and the signal edges are mirror padded.
Inversion uses the canonical dual window, so ``istft(stft(x))`` reproduces
``x`` to rounding error. Spectrogram columns are frames, so a magnitude
matrix can be handed to the NMF code directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import ShortTimeFFT, check_COLA
from scipy.signal.windows import hann

from .core import ConfigurationError, DimensionError

__all__ = [
    "StftConfig",
    "Spectrogram",
    "stft",
    "istft",
    "phase_transfer",
    "mix_at_snr",
    "read_wav",
    "write_wav",
]


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    fft_size: int = 512
    hop: int = 256
    sample_rate: int = 16000

    def __post_init__(self):
        if self.window_len < 2 or self.window_len % 2:
            raise ConfigurationError("window_len must be an even number >= 2")
        if self.hop != self.window_len // 2:
            raise ConfigurationError("hop must be half the window length")
        if self.fft_size < self.window_len:
            raise ConfigurationError("fft_size must be >= window_len")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        if not check_COLA(self.window(), self.window_len, self.window_len - self.hop):
            raise ConfigurationError("window does not satisfy constant overlap-add at this hop")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        return hann(self.window_len, sym=False)

    def transform(self) -> ShortTimeFFT:
        return ShortTimeFFT(self.window(), self.hop, self.sample_rate, mfft=self.fft_size,
                            fft_mode="onesided")


@dataclass
class Spectrogram:
    """Magnitudes and phases (``n_bins x n_frames``) of a signal of ``n_samples``."""

    magnitudes: np.ndarray
    phases: np.ndarray
    config: StftConfig
    n_samples: int

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        self.phases = np.asarray(self.phases, dtype=float)
        if self.magnitudes.shape != self.phases.shape:
            raise DimensionError("magnitudes and phases differ in shape")
        if self.magnitudes.ndim != 2 or self.magnitudes.shape[0] != self.config.n_bins:
            raise DimensionError(f"expected {self.config.n_bins} frequency bins, got shape {self.magnitudes.shape}")
        if np.any(self.magnitudes < 0):
            raise ConfigurationError("magnitudes must be non-negative")

    @property
    def complex(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.phases)

    @classmethod
    def from_complex(cls, Z, config: StftConfig, n_samples: int) -> "Spectrogram":
        return cls(np.abs(Z), np.angle(Z), config, n_samples)


def stft(signal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DimensionError("expected a mono (1-D) signal")
    if x.size < cfg.window_len:
        raise DimensionError(f"signal has {x.size} samples, fewer than the window length {cfg.window_len}")
    Z = cfg.transform().stft(x, padding="even")
    return Spectrogram.from_complex(Z, cfg, x.size)


def istft(spec: Spectrogram) -> np.ndarray:
    """Overlap-add inverse, trimmed to the original signal length."""
    T = spec.config.transform()
    expected = T.p_max(spec.n_samples) - T.p_min
    if spec.magnitudes.shape[1] != expected:
        raise DimensionError(f"{spec.magnitudes.shape[1]} frames, expected {expected} for {spec.n_samples} samples")
    return T.istft(spec.complex, k1=spec.n_samples)


def phase_transfer(clean_mag, noisy: Spectrogram) -> Spectrogram:
    """Attach the phases of ``noisy`` to separated magnitudes."""
    clean_mag = np.asarray(clean_mag, dtype=float)
    if clean_mag.shape != noisy.phases.shape:
        raise DimensionError(f"magnitude shape {clean_mag.shape} does not match {noisy.phases.shape}")
    return Spectrogram(clean_mag, noisy.phases.copy(), noisy.config, noisy.n_samples)


def mix_at_snr(speech, noise, snr_db: float) -> Tuple[np.ndarray, np.ndarray]:
    """``(speech + g * noise, g * noise)`` with ``g`` chosen to hit ``snr_db``."""
    s = np.asarray(speech, dtype=float)
    n = np.asarray(noise, dtype=float)
    if s.shape != n.shape:
        raise DimensionError(f"speech {s.shape} and noise {n.shape} differ in length")
    noise_energy = float(n @ n)
    if noise_energy == 0:
        raise ConfigurationError("noise is all zero; SNR cannot be set")
    gain = math.sqrt(float(s @ s) / (noise_energy * 10.0 ** (snr_db / 10.0)))
    scaled = gain * n
    return s + scaled, scaled


def read_wav(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """Mono WAV as float samples in [-1, 1] plus the sample rate."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise DimensionError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return data.astype(float) / 32768.0, rate
    if data.dtype == np.int32:
        return data.astype(float) / 2147483648.0, rate
    if data.dtype == np.uint8:
        return (data.astype(float) - 128.0) / 128.0, rate
    return data.astype(float), rate


def write_wav(path: Union[str, Path], signal, sample_rate: int = 16000, fmt: str = "float32") -> None:
    """Write mono audio as 32-bit float (default) or 16-bit PCM (``fmt="int16"``)."""
    x = np.asarray(signal, dtype=float)
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "int16":
        data = np.round(np.clip(x, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    else:
        raise ConfigurationError(f"unsupported WAV sample format {fmt!r}")
    wavfile.write(path, sample_rate, data)
