"""Reconstruction quality metrics and their aggregation over items and sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DimensionError

__all__ = ["EXACT", "psnr", "si_sdr", "MetricReport", "aggregate", "weighted_source_mean"]

#: value reported when an estimate is exact (zero error)
EXACT = math.inf

# SI-SDR above this many dB is floating-point noise on an exact match
_SI_SDR_EXACT_DB = 240.0


def psnr(reference, estimate, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; :data:`EXACT` when the MSE is zero."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise DimensionError(f"shape mismatch {reference.shape} vs {estimate.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0:
        return EXACT
    return 10.0 * math.log10(peak * peak / mse)


def si_sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB with mean removal.

    The reference is rescaled by its least-squares gain onto the estimate;
    the ratio of its energy to the remaining error is returned.
    """
    s = np.asarray(reference, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if s.shape != e.shape:
        raise DimensionError(f"length mismatch {s.size} vs {e.size}")
    s = s - s.mean()
    e = e - e.mean()
    energy = float(s @ s)
    if energy == 0:
        raise ValueError("reference is constant; SI-SDR is undefined")
    alpha = float(e @ s) / energy
    target = alpha * s
    noise = target - e
    target_energy = float(target @ target)
    noise_energy = float(noise @ noise)
    if noise_energy == 0 or (target_energy > 0 and 10 * math.log10(target_energy / noise_energy) > _SI_SDR_EXACT_DB):
        return EXACT
    if target_energy == 0:
        return -math.inf
    return 10.0 * math.log10(target_energy / noise_energy)


@dataclass
class MetricReport:
    values: np.ndarray
    median: float
    mean: float
    std_error: float
    count: int

    def as_dict(self) -> dict:
        return {"median": self.median, "mean": self.mean, "std_error": self.std_error, "count": self.count}


def weighted_source_mean(per_source, weights=None) -> np.ndarray:
    """Combine ``(S, n_items)`` metric values into one value per item.

    Zero-weight sources are ignored completely, so their values may be
    infinite or NaN (the denoising case scores only the signal of interest).
    """
    vals = np.atleast_2d(np.asarray(per_source, dtype=float))
    S = vals.shape[0]
    w = np.ones(S) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (S,):
        raise DimensionError(f"{w.size} weights for {S} sources")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")
    keep = w > 0
    w = w[keep] / w[keep].sum()
    return w @ vals[keep]


def aggregate(values, weights: Optional[Sequence[float]] = None) -> MetricReport:
    """Median, mean and standard error over items.

    ``values`` is either a flat sequence of per-item values or an
    ``(S, n_items)`` array combined across sources with ``weights`` first.
    Non-finite values (e.g. exact PSNR) are counted but excluded from the
    median, mean and standard error; if nothing is finite and all values
    agree, that shared value (e.g. :data:`EXACT`) is reported.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    if arr.ndim == 2 or weights is not None:
        arr = weighted_source_mean(arr, weights)
    arr = arr.ravel()
    finite = arr[np.isfinite(arr)]
    if finite.size:
        median = float(np.median(finite))
        mean = float(finite.mean())
        se = float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else 0.0
    else:
        median = mean = float(arr[0]) if np.all(arr == arr[0]) else math.nan
        se = 0.0
    return MetricReport(arr, median, mean, se, int(arr.size))
