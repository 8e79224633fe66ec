"""Desk-scale versions of the image and speech-denoising comparisons.

Both pipelines run end to end on synthetic data (see :mod:`mdnmf.synthetic`)
and return per-item scores, so they serve as smoke tests and as the
directional checks in the acceptance suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .adversarial import AdversarialSpec, MixingSpec, assemble_adversarial, beta, default_omega, mix_signals
from .audio import StftConfig, istft, mix_at_snr, phase_transfer, stft
from .metrics import aggregate, psnr, si_sdr
from .separation import SeparationConfig, separate
from .synthetic import SyntheticSpeaker, colored_noise, digit_images
from .trainer import SourceBundle, TrainConfig, init_exemplar, train, train_semi_supervised

__all__ = [
    "MODES",
    "ImageData",
    "make_image_data",
    "image_bundles",
    "fit_bases",
    "score_images",
    "run_image_experiment",
    "AudioData",
    "make_audio_data",
    "run_audio_experiment",
]

log = logging.getLogger(__name__)

MODES = ("nmf", "enmf", "mdnmf", "dnmf", "d+mdnmf")


@dataclass
class ImageData:
    """Paired training mixtures and held-out test mixtures of two glyph classes."""

    weights: np.ndarray
    train_sources: List[np.ndarray]
    train_mixed: np.ndarray
    test_sources: List[np.ndarray]
    test_mixed: np.ndarray


def make_image_data(n_train=500, n_test=200, kinds=("0", "1"), weights=(0.5, 0.5), seed=0) -> ImageData:
    rng = np.random.default_rng(seed)
    mix = MixingSpec(np.asarray(weights, dtype=float))
    train_src = [digit_images(k, n_train, rng) for k in kinds]
    test_src = [digit_images(k, n_test, rng) for k in kinds]
    return ImageData(mix.weights, train_src, mix_signals(mix, train_src), test_src, mix_signals(mix, test_src))


def image_bundles(data: ImageData, use_beta: bool = False) -> List[SourceBundle]:
    """Weak, adversarial and strong data for every source from the paired training set.

    Weak data are the clean sources; strong data are the scaled components
    ``a_i u_i`` of the mixtures; each adversarial pool holds the other source
    and the naively inverted mixtures, weighted by data availability.
    """
    S = len(data.train_sources)
    mix = MixingSpec(data.weights)
    counts = [U.shape[1] for U in data.train_sources]
    n_mixed = data.train_mixed.shape[1]
    omega = np.vstack([default_omega(counts, n_mixed, i) for i in range(S)])
    betas = np.array([beta(mix, i) for i in range(S)]) if use_beta else None
    spec = AdversarialSpec(omega, beta=betas)
    bundles = []
    for i in range(S):
        adv = assemble_adversarial(i, data.train_sources, data.train_mixed, spec, mix)
        bundles.append(SourceBundle(
            weak=data.train_sources[i],
            adversarial=adv,
            strong_sources=data.weights[i] * data.train_sources[i],
            strong_mixed=data.train_mixed,
        ))
    return bundles


def fit_bases(mode: str, bundles: Sequence[SourceBundle], cfg: TrainConfig):
    """Bases for one of :data:`MODES`; ``enmf`` only samples exemplars."""
    if mode == "enmf":
        rng = np.random.default_rng(cfg.seed)
        return [init_exemplar(b.weak, cfg.d_for(i), rng) for i, b in enumerate(bundles)], []
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return train(bundles, cfg)


def score_images(bases, data: ImageData, lam: float, source_weights=None) -> np.ndarray:
    """Per-test-image PSNR, averaged over sources with ``source_weights``.

    Separated components are divided by their mixing weight so they are
    compared with the clean source images.
    """
    result = separate(bases, data.test_mixed, SeparationConfig(lam=lam, max_iters=200))
    per_source = []
    for i, (u, ref) in enumerate(zip(result.parts, data.test_sources)):
        est = u / data.weights[i] if data.weights[i] > 0 else u
        per_source.append([psnr(ref[:, k], est[:, k]) for k in range(ref.shape[1])])
    return aggregate(np.array(per_source), source_weights).values


def run_image_experiment(mode: str, data: ImageData, cfg: TrainConfig, use_beta: bool = False) -> Dict:
    bundles = image_bundles(data, use_beta)
    bases, traces = fit_bases(mode, bundles, cfg)
    lam = cfg.lam_for(0)
    scores = score_images(bases, data, lam)
    report = aggregate(scores)
    return {"mode": mode, "bases": bases, "traces": traces, "scores": scores, "report": report}


@dataclass
class AudioData:
    """One speaker: clean training speech and noisy test clips with their clean references."""

    config: StftConfig
    train_speech: np.ndarray
    test_clean: List[np.ndarray]
    test_noisy: List[np.ndarray]
    test_noise: List[np.ndarray]
    snr_db: float
    speech_weight: float = 0.5


def make_audio_data(seed=0, train_seconds=8.0, n_test=4, test_seconds=2.0, snr_db=3.0,
                    cfg: StftConfig = StftConfig(), noise_kind: Optional[str] = None) -> AudioData:
    rng = np.random.default_rng(seed)
    speaker = SyntheticSpeaker.random(rng, cfg.sample_rate)
    train_speech = speaker.utter(train_seconds, rng)
    clean, noisy, noise = [], [], []
    for _ in range(n_test):
        s = speaker.utter(test_seconds, rng)
        n = colored_noise(test_seconds, rng, cfg.sample_rate, noise_kind)
        mixture, scaled = mix_at_snr(s, n, snr_db)
        clean.append(s)
        noisy.append(mixture)
        noise.append(scaled)
    return AudioData(cfg, train_speech, clean, noisy, noise, snr_db)


def run_audio_experiment(data: AudioData, adversarial: bool, d_speech=32, d_noise=8,
                         lam_speech=1e-3, lam_noise=1e-10, tau_a=0.02, epochs=200,
                         noise_epochs=300, batch_size=None, seed=0, **train_overrides) -> Dict:
    """Speech basis (plain or maximum-discrepancy) plus a noise basis fit from the noisy clips.

    With ``adversarial`` the speech basis is trained against the noisy
    spectra as adversarial data, scaled through the beta approximation with
    equal mixing weights. ``train_overrides`` go to the speech basis
    :class:`TrainConfig`. Returns per-clip SI-SDR of the denoised speech.
    """
    cfg_stft = data.config
    speech_mag = stft(data.train_speech, cfg_stft).magnitudes
    noisy_specs = [stft(x, cfg_stft) for x in data.test_noisy]
    V = np.hstack([s.magnitudes for s in noisy_specs])

    adv = None
    if adversarial:
        mix = MixingSpec(np.array([data.speech_weight, 1 - data.speech_weight]))
        spec = AdversarialSpec(np.eye(2), beta=np.array([beta(mix, 0), beta(mix, 1)]))
        adv = assemble_adversarial(0, [speech_mag, None], V, spec, mix)
    mode = "mdnmf" if adversarial else "nmf"
    overrides = dict(tau_a=tau_a) if adversarial else {}
    cfg = TrainConfig.preset(mode, d=d_speech, lam=lam_speech, epochs=epochs,
                             batch_size=batch_size, seed=seed, **overrides, **train_overrides)
    (W_speech,), _ = train([SourceBundle(weak=speech_mag, adversarial=adv)], cfg)

    semi_cfg = TrainConfig(d=[d_speech, d_noise], lam=[lam_speech, lam_noise], epochs=noise_epochs,
                           batch_size=batch_size, seed=seed + 1)
    W_noise = train_semi_supervised([W_speech], V, semi_cfg)

    scores = []
    for spec_noisy, clean in zip(noisy_specs, data.test_clean):
        res = separate([W_speech, W_noise], spec_noisy.magnitudes,
                       SeparationConfig(lam=[lam_speech, lam_noise], max_iters=200))
        speech_est = istft(phase_transfer(res.parts[0], spec_noisy))
        scores.append(si_sdr(clean, speech_est))
    return {"adversarial": adversarial, "bases": [W_speech, W_noise], "scores": np.array(scores)}
