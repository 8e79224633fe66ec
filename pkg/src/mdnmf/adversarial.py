"""Adversarial datasets for maximum-discrepancy training.

The adversarial pool for source ``i`` is a mixture of the clean samples of every
other source and of naively inverted mixtures. Mixture weights ``omega[i, j]``
are folded into the data as ``sqrt(omega)`` column scalings, so a plain mean over
the assembled columns reproduces the weighted expectation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import ConfigurationError, DimensionError, ValidationError, as_nonneg

__all__ = [
    "MixingSpec",
    "AdversarialSpec",
    "ScaledDataset",
    "naive_invert",
    "default_omega",
    "omega_matrix",
    "assemble_adversarial",
    "beta",
    "mix_signals",
]

_TOL = 1e-12


def _check_weights(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise ConfigurationError("mixing weights must be a non-empty vector")
    if np.any(a < 0) or np.any(a > 1):
        raise ConfigurationError(f"mixing weights must lie in [0, 1], got {a}")
    if abs(a.sum() - 1.0) > _TOL:
        raise ConfigurationError(f"mixing weights must sum to 1, got {a.sum()!r}")
    return a


@dataclass
class MixingSpec:
    """Mixing weights: one deterministic vector, or a list of sampled vectors."""

    weights: np.ndarray
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = _check_weights(self.weights)
        if self.samples is not None:
            samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
            for row in samples:
                _check_weights(row)
            if samples.shape[1] != self.weights.size:
                raise ConfigurationError("sampled weight vectors have the wrong length")
            self.samples = samples

    @classmethod
    def sampled(cls, samples) -> "MixingSpec":
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return cls(weights=samples.mean(axis=0), samples=samples)

    @property
    def n_sources(self) -> int:
        return self.weights.size

    def draws(self) -> np.ndarray:
        return self.samples if self.samples is not None else self.weights[None, :]


@dataclass
class AdversarialSpec:
    """Row-stochastic ``omega`` (S x S); ``omega[i, i]`` weighs the inverted mixtures."""

    omega: np.ndarray
    include_naive_inversion: bool = True
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        if omega.shape[0] != omega.shape[1]:
            raise ConfigurationError("omega must be square")
        if np.any(omega < 0) or np.any(omega > 1):
            raise ConfigurationError("omega entries must lie in [0, 1]")
        if np.any(np.abs(omega.sum(axis=1) - 1.0) > _TOL):
            raise ConfigurationError("rows of omega must sum to 1")
        self.omega = omega
        if self.beta is not None:
            self.beta = np.asarray(self.beta, dtype=float).reshape(-1)


@dataclass
class ScaledDataset:
    """Adversarial data with the ``sqrt(omega)`` factor applied to each column.

    ``lambda_scale`` holds that factor per column so the encoder can scale its
    sparsity weight to match.
    """

    data: np.ndarray
    lambda_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.lambda_scale is None:
            self.lambda_scale = np.ones(self.data.shape[1])
        self.lambda_scale = np.asarray(self.lambda_scale, dtype=float)
        if self.lambda_scale.shape != (self.data.shape[1],):
            raise DimensionError("lambda_scale needs one entry per column")

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    def subset(self, idx) -> "ScaledDataset":
        return ScaledDataset(self.data[:, idx], self.lambda_scale[idx])


def _inversion_factor(a, i: int) -> float:
    a = np.asarray(a, dtype=float)
    denom = float(a @ a)
    if denom == 0:
        raise ZeroDivisionError("all mixing weights are zero")
    return a[i] / denom


def naive_invert(a, v) -> List[np.ndarray]:
    """Pseudo-inverse of the mixing operator applied to ``v``: ``a_i / sum(a^2) * v`` per source."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ZeroDivisionError("all mixing weights are zero")
    a = _check_weights(a)
    v = np.asarray(v, dtype=float)
    return [_inversion_factor(a, i) * v for i in range(a.size)]


def default_omega(counts: Sequence[int], n_mixed: int, i: int) -> np.ndarray:
    """Weights proportional to data availability.

    ``omega[j] = N_j / N_hat`` for ``j != i`` and ``omega[i] = 1 - sum`` of the
    rest, with ``N_hat = n_mixed + sum_{j != i} N_j``. Entry ``i`` belongs to the
    inverted mixtures.
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0) or n_mixed < 0:
        raise ConfigurationError("data counts must be non-negative")
    others = np.delete(np.arange(counts.size), i)
    n_hat = n_mixed + counts[others].sum()
    if n_hat <= 0:
        raise ConfigurationError(f"source {i} has no adversarial data")
    omega = np.zeros(counts.size)
    omega[others] = counts[others] / n_hat
    omega[i] = 1.0 - omega[others].sum()
    return omega


def omega_matrix(counts: Sequence[int], n_mixed: int) -> np.ndarray:
    return np.vstack([default_omega(counts, n_mixed, i) for i in range(len(counts))])


def assemble_adversarial(
    i: int,
    sources: Sequence,
    mixed,
    spec: AdversarialSpec,
    mix: MixingSpec,
    mixing_weights=None,
) -> ScaledDataset:
    """Build the adversarial matrix for source ``i``.

    Columns are ``sqrt(omega[i, j]) * U_j`` for every other source followed by
    the inverted mixtures scaled by ``sqrt(omega[i, i])``. When ``spec.beta`` is
    given, the mixtures are taken raw and scaled by ``sqrt(omega[i, i] * beta[i])``
    instead of being inverted one by one; this only needs samples of the mixtures.

    ``mixing_weights`` (n_mixed x S), when given, pairs every mixture with its own
    weights; otherwise ``mix.weights`` is used for all of them.
    """
    S = len(sources)
    omega = spec.omega
    if omega.shape[0] != S:
        raise ConfigurationError(f"omega is {omega.shape[0]}x{omega.shape[0]} for {S} sources")
    row = omega[i]
    blocks, scales = [], []
    m = None
    for j, U in enumerate(sources):
        if U is None:
            continue
        U = as_nonneg(U, f"source {j}")
        if m is None:
            m = U.shape[0]
        elif U.shape[0] != m:
            raise DimensionError("sources have different feature dimensions")
        if j == i or row[j] == 0:
            continue
        w = np.sqrt(row[j])
        blocks.append(w * U)
        scales.append(np.full(U.shape[1], w))
    if spec.include_naive_inversion and mixed is not None and row[i] > 0:
        V = as_nonneg(mixed, "mixed")
        if m is not None and V.shape[0] != m:
            raise DimensionError("mixed data has a different feature dimension")
        if spec.beta is not None:
            w = np.sqrt(row[i] * spec.beta[i])
            blocks.append(w * V)
            # sparsity follows the omega weight only; beta rescales the data approximation
            scales.append(np.full(V.shape[1], np.sqrt(row[i])))
        else:
            if mixing_weights is None:
                factors = np.full(V.shape[1], _inversion_factor(mix.weights, i))
            else:
                A = np.atleast_2d(np.asarray(mixing_weights, dtype=float))
                if A.shape != (V.shape[1], S):
                    raise DimensionError("need one weight vector per mixed column")
                factors = np.array([_inversion_factor(a, i) for a in A])
            w = np.sqrt(row[i])
            blocks.append(w * V * factors[None, :])
            scales.append(np.full(V.shape[1], w))
    if not blocks:
        raise ConfigurationError(f"adversarial pool for source {i} is empty")
    data = np.hstack(blocks)
    if np.any(data < 0):
        raise ValidationError("adversarial data became negative")
    return ScaledDataset(data, np.concatenate(scales))


def beta(mix: MixingSpec, i: int) -> float:
    """Mean of ``(a_i / sum_j a_j^2)^2`` over the mixing weights."""
    draws = mix.draws()
    return float(np.mean([_inversion_factor(a, i) ** 2 for a in draws]))


def mix_signals(mix: MixingSpec, sources: Sequence) -> np.ndarray:
    """``sum_i a_i u_i``."""
    arrays = [np.asarray(u, dtype=float) for u in sources]
    if len(arrays) != mix.n_sources:
        raise ConfigurationError(f"{len(arrays)} sources for {mix.n_sources} weights")
    shape = arrays[0].shape
    if any(u.shape != shape for u in arrays):
        raise DimensionError("sources must have equal shapes")
    return sum(a * u for a, u in zip(mix.weights, arrays))
