"""Separation of mixtures with trained bases: joint sparse coding plus a Wiener mask."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from .core import ConfigurationError, DimensionError, EncodeConfig, as_nonneg, encode

__all__ = ["SeparationConfig", "SeparationResult", "wiener_filter", "separate"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparationConfig:
    """``lam`` may be a single value or one per source; ``eps`` guards the mask division."""

    lam: Union[float, Sequence[float]] = 1e-2
    eps: float = 1e-12
    max_iters: int = 200
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        lams = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if np.any(lams < 0) or not np.all(np.isfinite(lams)):
            raise ConfigurationError("lam must be finite and >= 0")


@dataclass
class SeparationResult:
    parts: List[np.ndarray]
    latents: List[np.ndarray]
    reconstructions: List[np.ndarray]
    residual_norm: float
    degenerate: bool = False

    @property
    def n_sources(self) -> int:
        return len(self.parts)


def wiener_filter(v, parts: Sequence, eps: float = 1e-12) -> List[np.ndarray]:
    """``v * part_i / (sum(parts) + eps)`` for each part."""
    if not eps > 0:
        raise ConfigurationError("eps must be > 0")
    v = np.asarray(v, dtype=float)
    parts = [np.asarray(p, dtype=float) for p in parts]
    if any(p.shape != v.shape for p in parts):
        raise DimensionError("every part must have the shape of the mixture")
    if any(np.any(p < 0) for p in parts):
        raise ConfigurationError("parts must be non-negative")
    gain = v / (sum(parts) + eps)
    return [gain * p for p in parts]


def separate(bases: Sequence, v, cfg: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Split each column of ``v`` into one estimate per basis.

    The concatenated basis codes ``v`` sparsely (per-source ``lam`` allowed),
    and the per-source reconstructions are turned into a mask over ``v``.
    """
    v = as_nonneg(v, "mixture")
    bases = [as_nonneg(W, f"basis {i}") for i, W in enumerate(bases)]
    if not bases:
        raise ConfigurationError("need at least one basis")
    for i, W in enumerate(bases):
        if W.shape[0] != v.shape[0]:
            raise DimensionError(f"basis {i} has {W.shape[0]} rows, mixture has {v.shape[0]}")
    sizes = [W.shape[1] for W in bases]
    lams = np.atleast_1d(np.asarray(cfg.lam, dtype=float))
    if lams.size == 1:
        lams = np.repeat(lams, len(bases))
    elif lams.size != len(bases):
        raise ConfigurationError(f"{lams.size} sparsity weights for {len(bases)} sources")
    row_scale = np.repeat(lams, sizes)
    W = np.hstack(bases)
    H = encode(W, v, EncodeConfig(lam=1.0, row_scale=row_scale, max_iters=cfg.max_iters, rel_tol=cfg.rel_tol))
    offsets = np.cumsum([0] + sizes)
    latents = [H[offsets[i]:offsets[i + 1]] for i in range(len(bases))]
    recon = [Wi @ Hi for Wi, Hi in zip(bases, latents)]
    total = sum(recon)
    degenerate = not np.any(total > 0)
    if degenerate:
        log.warning("all reconstructions are zero; returning zero estimates")
    parts = wiener_filter(v, recon, cfg.eps)
    residual = float(np.linalg.norm(v - total))
    return SeparationResult(parts, latents, recon, residual, degenerate)
