"""Mini-batch schedules for losses whose terms draw on datasets of different sizes."""

from __future__ import annotations

import math
from typing import Dict, List, Mapping, Optional, Union

import numpy as np

from .core import ConfigurationError

__all__ = ["STRATEGIES", "BatchPlan", "batch_plan"]

STRATEGIES = ("proportional", "undersample", "oversample", "iterative")


class BatchPlan:
    """Per-epoch column schedule for several named datasets ("weak", "adversarial", ...).

    ``batch_sizes`` maps a term to its batch size; a missing entry or ``None``
    means the whole dataset per batch. A term of ``n`` columns and batch size
    ``b`` is cut into ``ceil(n / b)`` batches; the last one is short when ``b``
    does not divide ``n``. With ``balanced`` the columns are spread evenly
    over the same number of batches instead, which avoids a tiny remainder
    batch (one multiplicative step on a handful of columns can pull barely
    used atoms far off). The number of batches per epoch is:

    * ``proportional``: that of the designated term; other terms get batch sizes
      proportional to their dataset size.
    * ``undersample``: the smallest batch count over terms; the rest is dropped.
    * ``oversample``: the largest batch count; shorter datasets are re-read
      circularly from their first (shuffled) batch.
    * ``iterative``: that of the designated term; every other term keeps its
      own position across epochs and reshuffles only when it is used up.
    """

    def __init__(
        self,
        sizes: Mapping[str, int],
        batch_sizes: Union[None, int, Mapping[str, Optional[int]]] = None,
        strategy: str = "undersample",
        designated: str = "weak",
        shuffle: bool = True,
        balanced: bool = False,
    ):
        if strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown batch strategy {strategy!r}; choose from {STRATEGIES}")
        self.sizes = {k: int(v) for k, v in sizes.items()}
        if not self.sizes:
            raise ConfigurationError("no datasets to batch")
        if any(v < 1 for v in self.sizes.values()):
            raise ConfigurationError(f"empty dataset in batch plan: {self.sizes}")
        if designated not in self.sizes:
            designated = next(iter(self.sizes))
        self.designated = designated
        self.strategy = strategy
        self.shuffle = shuffle
        self.balanced = balanced
        if batch_sizes is None or isinstance(batch_sizes, (int, np.integer)):
            batch_sizes = {k: batch_sizes for k in self.sizes}
        self.batch_sizes = {}
        for k, n in self.sizes.items():
            b = batch_sizes.get(k)
            if b is None:
                b = n
            if b < 1:
                raise ConfigurationError(f"batch size for {k!r} must be >= 1")
            self.batch_sizes[k] = min(int(b), n)

        counts = {k: math.ceil(n / self.batch_sizes[k]) for k, n in self.sizes.items()}
        if strategy == "proportional":
            self.n_batches = counts[designated]
            counts = {k: min(self.n_batches, n) for k, n in self.sizes.items()}
        elif strategy == "undersample":
            self.n_batches = min(counts.values())
        elif strategy == "oversample":
            self.n_batches = max(counts.values())
        else:
            self.n_batches = counts[designated]
        self.counts = counts
        if strategy == "proportional":
            self.batch_sizes = {k: math.ceil(n / counts[k]) for k, n in self.sizes.items()}
        self._state: Dict[str, tuple] = {}

    def _perm(self, rng, n):
        return rng.permutation(n) if self.shuffle else np.arange(n)

    def _split(self, key, rng):
        perm = self._perm(rng, self.sizes[key])
        if self.balanced or (self.strategy == "proportional" and key != self.designated):
            return np.array_split(perm, self.counts[key])
        b = self.batch_sizes[key]
        return [perm[k:k + b] for k in range(0, perm.size, b)]

    def _iterative_take(self, key, rng):
        parts, pos = self._state.get(key, (None, None))
        if parts is None or pos >= len(parts):
            parts, pos = self._split(key, rng), 0
        self._state[key] = (parts, pos + 1)
        return parts[pos]

    def epoch(self, rng: np.random.Generator) -> List[Dict[str, np.ndarray]]:
        """Column indices for each batch of one epoch (fresh shuffles from ``rng``)."""
        keys = sorted(self.sizes)
        if self.strategy == "iterative":
            parts = self._split(self.designated, rng)
            out = []
            for k in range(self.n_batches):
                batch = {self.designated: parts[k]}
                for key in keys:
                    if key != self.designated:
                        batch[key] = self._iterative_take(key, rng)
                out.append(batch)
            return out

        splits = {key: self._split(key, rng) for key in keys}
        # wrap-around is only reachable when oversampling
        return [{key: splits[key][k % len(splits[key])] for key in keys} for k in range(self.n_batches)]


def batch_plan(sizes, batch_sizes=None, strategy="undersample", designated="weak", shuffle=True,
               balanced=False):
    return BatchPlan(sizes, batch_sizes, strategy, designated, shuffle, balanced)
