"""Synthetic stand-ins for the image and audio corpora.

``digit_images`` draws 28x28 handwriting-like strokes ("zero" rings, "one"
bars, and a few other glyphs) with random pose, size and stroke width.
``SyntheticSpeaker`` produces voiced, formant-shaped harmonic "speech" from
a small per-speaker set of pitches and vowels; ``colored_noise`` produces
spectrally shaped noise. Everything is driven by an explicit numpy Generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

__all__ = ["DIGIT_KINDS", "NOISE_KINDS", "digit_images", "SyntheticSpeaker", "colored_noise"]

SIDE = 28


def _grid():
    y, x = np.mgrid[0:SIDE, 0:SIDE].astype(float)
    return x - (SIDE - 1) / 2, y - (SIDE - 1) / 2


def _segment_distance(x, y, p, q):
    d = q - p
    t = np.clip(((x - p[0]) * d[0] + (y - p[1]) * d[1]) / max(d @ d, 1e-12), 0, 1)
    return np.hypot(x - (p[0] + t * d[0]), y - (p[1] + t * d[1]))


def _stroke(dist, width):
    # soft-edged pen: 1 inside the stroke, linear falloff over one pixel
    return np.clip(width - dist + 0.5, 0.0, 1.0)


def _zero(rng, x, y):
    a, b = rng.uniform(4.5, 7.5), rng.uniform(7.5, 10.5)
    theta = rng.uniform(-0.35, 0.35)
    cx, cy = rng.uniform(-2, 2, size=2)
    xr = (x - cx) * np.cos(theta) + (y - cy) * np.sin(theta)
    yr = -(x - cx) * np.sin(theta) + (y - cy) * np.cos(theta)
    rho = np.sqrt((xr / a) ** 2 + (yr / b) ** 2)
    dist = np.abs(rho - 1.0) * 0.5 * (a + b)
    return _stroke(dist, rng.uniform(0.8, 1.8))


def _one(rng, x, y):
    theta = rng.uniform(-0.4, 0.4)
    length = rng.uniform(15, 21)
    c = rng.uniform(-3, 3, size=2) * np.array([1.0, 0.5])
    direction = np.array([np.sin(theta), -np.cos(theta)])
    top, bottom = c + 0.5 * length * direction, c - 0.5 * length * direction
    img = _stroke(_segment_distance(x, y, bottom, top), rng.uniform(0.7, 1.6))
    if rng.random() < 0.4:
        flag = top + np.array([-rng.uniform(2.5, 4.5), rng.uniform(1.5, 3.5)])
        img = np.maximum(img, _stroke(_segment_distance(x, y, top, flag), 0.8))
    return img


def _seven(rng, x, y):
    w = rng.uniform(9, 13)
    c = rng.uniform(-2, 2, size=2)
    tl = c + np.array([-w / 2, -9])
    tr = c + np.array([w / 2, -9])
    foot = c + np.array([rng.uniform(-3, 1), 10])
    width = rng.uniform(0.8, 1.5)
    return np.maximum(_stroke(_segment_distance(x, y, tl, tr), width),
                      _stroke(_segment_distance(x, y, tr, foot), width))


def _four(rng, x, y):
    c = rng.uniform(-2, 2, size=2)
    width = rng.uniform(0.8, 1.5)
    top = c + np.array([2, -10])
    left = c + np.array([-7, 3])
    right = c + np.array([6, 3])
    stem_top = c + np.array([3, -4])
    stem_bottom = c + np.array([3, 10])
    img = _stroke(_segment_distance(x, y, top, left), width)
    img = np.maximum(img, _stroke(_segment_distance(x, y, left, right), width))
    return np.maximum(img, _stroke(_segment_distance(x, y, stem_top, stem_bottom), width))


DIGIT_KINDS = {"0": _zero, "1": _one, "4": _four, "7": _seven}


def digit_images(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """``784 x n`` matrix of flattened images in [0, 1], one glyph per column."""
    if kind not in DIGIT_KINDS:
        raise ValueError(f"unknown glyph {kind!r}; choose from {sorted(DIGIT_KINDS)}")
    draw = DIGIT_KINDS[kind]
    x, y = _grid()
    out = np.empty((SIDE * SIDE, n))
    for k in range(n):
        img = draw(rng, x, y) * rng.uniform(0.75, 1.0)
        out[:, k] = img.reshape(-1)
    return out


@dataclass
class SyntheticSpeaker:
    """A voice: a few habitual pitches plus a small set of vowel formant patterns."""

    pitches: np.ndarray  # fundamental frequencies in Hz
    formants: np.ndarray  # (n_vowels, 3) centre frequencies in Hz
    bandwidth: float = 120.0
    glide: float = 0.03  # relative pitch drift over one syllable
    sample_rate: int = 16000

    @classmethod
    def random(cls, rng: np.random.Generator, sample_rate: int = 16000) -> "SyntheticSpeaker":
        low = rng.uniform(85, 200)
        n_vowels = 5
        f1 = rng.uniform(300, 850, n_vowels)
        f2 = rng.uniform(900, 2300, n_vowels)
        f3 = rng.uniform(2400, 3400, n_vowels)
        pitches = low * np.array([1.0, rng.uniform(1.1, 1.2), rng.uniform(1.25, 1.4)])
        return cls(pitches, np.stack([f1, f2, f3], axis=1), rng.uniform(80, 160), 0.03, sample_rate)

    def _envelope(self, freqs, vowel):
        env = np.full_like(freqs, 1e-3)
        for k, fc in enumerate(self.formants[vowel]):
            env += (0.6 ** k) / (1.0 + ((freqs - fc) / self.bandwidth) ** 2)
        return env * np.exp(-freqs / 4000.0)

    def utter(self, seconds: float, rng: np.random.Generator) -> np.ndarray:
        """Syllables of gliding harmonic tones separated by short pauses."""
        sr = self.sample_rate
        total = int(seconds * sr)
        out = np.zeros(total)
        pos = int(rng.uniform(0.02, 0.08) * sr)
        while pos < total:
            dur = int(rng.uniform(0.12, 0.3) * sr)
            n = min(dur, total - pos)
            if n <= 16:
                break
            t = np.arange(n) / sr
            f0 = self.pitches[rng.integers(len(self.pitches))] * (
                1 + rng.uniform(-self.glide, self.glide) * t / max(t[-1], 1e-9))
            phase = 2 * np.pi * np.cumsum(f0) / sr
            vowel = rng.integers(len(self.formants))
            n_harm = int(min(7600 / f0.max(), 60))
            harmonics = np.arange(1, n_harm + 1)
            amps = self._envelope(harmonics * f0.mean(), vowel)
            tone = np.sin(np.outer(phase, harmonics) + rng.uniform(0, 2 * np.pi, n_harm)) @ amps
            out[pos:pos + n] += tone * np.hanning(n)
            pos += n + int(rng.uniform(0.02, 0.12) * sr)
        peak = np.max(np.abs(out))
        return out / peak * 0.5 if peak > 0 else out


NOISE_KINDS = ("lowpass", "bandpass", "highpass", "resonant")


def colored_noise(seconds: float, rng: np.random.Generator, sample_rate: int = 16000,
                  kind: str = None) -> np.ndarray:
    """Gaussian noise through a random band-limited filter, with slow amplitude drift.

    ``kind`` picks the filter family from :data:`NOISE_KINDS`; random if omitted.
    """
    n = int(seconds * sample_rate)
    white = rng.standard_normal(n)
    nyq = sample_rate / 2
    kind = NOISE_KINDS[rng.integers(len(NOISE_KINDS))] if kind is None else kind
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}")
    if kind == "lowpass":
        b, a = sps.butter(2, rng.uniform(300, 1500) / nyq, btype="low")
    elif kind == "bandpass":
        lo = rng.uniform(200, 2000)
        b, a = sps.butter(2, [lo / nyq, min(lo * rng.uniform(2, 4), 7000) / nyq], btype="band")
    elif kind == "highpass":
        b, a = sps.butter(2, rng.uniform(2000, 5000) / nyq, btype="high")
    if kind == "resonant":
        # hum-like: a few narrow resonances over a faint broadband floor
        noise = 0.05 * white
        for fc in rng.uniform(150, 3500, size=3):
            b, a = sps.iirpeak(fc, fc / rng.uniform(20, 60), fs=sample_rate)
            noise = noise + sps.lfilter(b, a, rng.standard_normal(n))
    else:
        noise = sps.lfilter(b, a, white)
    drift = 1 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.1, 0.5) * np.arange(n) / sample_rate
                             + rng.uniform(0, 2 * np.pi))
    noise = noise * drift
    return noise / np.max(np.abs(noise)) * 0.5
