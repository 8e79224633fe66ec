"""Random hyperparameter search with optional k-fold cross-validation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigurationError

__all__ = [
    "LogUniform",
    "Uniform",
    "IntUniform",
    "Categorical",
    "SearchSpace",
    "default_space",
    "kfold",
    "TrialRecord",
    "SearchResult",
    "random_search",
    "trials_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigurationError(f"log-uniform needs 0 < lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    def describe(self):
        return {"law": "log-uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"uniform needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def describe(self):
        return {"law": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class IntUniform:
    """Integers ``lo..hi`` inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"integer range needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def describe(self):
        return {"law": "int-uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.choices:
            raise ConfigurationError("categorical needs at least one choice")

    def sample(self, rng):
        c = self.choices[int(rng.integers(len(self.choices)))]
        return c.item() if isinstance(c, np.generic) else c

    def describe(self):
        return {"law": "categorical", "choices": list(self.choices)}


_LAWS = {"log-uniform": LogUniform, "uniform": Uniform, "int-uniform": IntUniform}


def law_from_dict(d: Mapping):
    kind = d.get("law")
    if kind == "categorical":
        return Categorical(tuple(d["choices"]))
    if kind in _LAWS:
        return _LAWS[kind](d["lo"], d["hi"])
    raise ConfigurationError(f"unknown sampling law {kind!r}")


@dataclass
class SearchSpace:
    """Sampling laws per hyperparameter, trial count and CV folds (``folds=0`` disables CV)."""

    params: Dict[str, object]
    trials: int = 30
    folds: int = 5

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.folds == 1 or self.folds < 0:
            raise ConfigurationError("folds must be 0 (no CV) or >= 2")
        if not self.params:
            raise ConfigurationError("search space has no parameters")

    def sample(self, rng) -> dict:
        # sorted order keeps a seed's draws independent of dict insertion order
        return {k: self.params[k].sample(rng) for k in sorted(self.params)}

    def describe(self) -> dict:
        return {"params": {k: v.describe() for k, v in sorted(self.params.items())},
                "trials": self.trials, "folds": self.folds}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SearchSpace":
        return cls({k: law_from_dict(v) for k, v in d["params"].items()},
                   int(d.get("trials", 30)), int(d.get("folds", 5)))


def default_space(trials: int = 30, folds: int = 5, strong: bool = True) -> SearchSpace:
    """Stand-in defaults: sparsity and loss weights log-uniform on [1e-10, 1], tau_w fixed at 1."""
    params = {
        "lam": LogUniform(1e-10, 1.0),
        "gamma": LogUniform(1e-10, 1.0),
        "tau_a": LogUniform(1e-10, 1.0),
        "epochs": IntUniform(5, 100),
        "batch_size": Categorical((16, 32, 64, 128)),
        "tau_w": Categorical((1.0,)),
    }
    if strong:
        params["tau_s"] = LogUniform(1e-10, 1.0)
    return SearchSpace(params, trials, folds)


def kfold(n: int, k: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """``k`` (train, validation) index pairs over a seeded shuffle of ``range(n)``."""
    if k < 2 or n < k:
        raise ConfigurationError(f"cannot split {n} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, k)
    return [(np.sort(np.concatenate(parts[:j] + parts[j + 1:])), np.sort(parts[j])) for j in range(k)]


@dataclass
class TrialRecord:
    trial: int
    params: dict
    fold_scores: List[float] = field(default_factory=list)
    mean_score: float = math.nan
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SearchResult:
    best: dict
    best_score: float
    trials: List[TrialRecord]


def random_search(
    space: SearchSpace,
    evaluate: Callable,
    seed: int = 0,
    n_items: Optional[int] = None,
) -> SearchResult:
    """Sample ``space.trials`` configurations and keep the best mean score.

    ``evaluate(params, fold)`` returns a score to maximize. ``fold`` is a
    ``(train_idx, val_idx)`` pair over ``n_items`` items when CV is on and
    ``None`` otherwise. A trial whose evaluation raises is recorded as failed.
    """
    rng = np.random.default_rng(seed)
    configs = [space.sample(rng) for _ in range(space.trials)]
    folds = None
    if space.folds and n_items is not None:
        folds = kfold(n_items, space.folds, seed)
    records = []
    for t, params in enumerate(configs):
        rec = TrialRecord(t, params)
        try:
            if folds is None:
                rec.fold_scores = [float(evaluate(params, None))]
            else:
                rec.fold_scores = [float(evaluate(params, f)) for f in folds]
            rec.mean_score = float(np.mean(rec.fold_scores))
            if math.isnan(rec.mean_score):
                raise ValueError("score is NaN")
        except Exception as exc:  # a bad configuration must not end the search
            rec.status = f"failed: {type(exc).__name__}: {exc}"
            rec.mean_score = math.nan
            log.warning("trial %d failed: %s", t, exc)
        records.append(rec)
    done = [r for r in records if r.ok]
    if not done:
        raise RuntimeError(f"all {len(records)} trials failed")
    # first trial wins ties
    best = max(done, key=lambda r: (r.mean_score, -r.trial))
    return SearchResult(dict(best.params), best.mean_score, records)


def trials_csv(records: Sequence[TrialRecord]) -> str:
    """``trial,params_json,fold_scores,mean_score,status`` with ``;``-joined fold scores."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial", "params_json", "fold_scores", "mean_score", "status"])
    for r in records:
        writer.writerow([
            r.trial,
            json.dumps(r.params, sort_keys=True),
            ";".join(repr(float(s)) for s in r.fold_scores),
            repr(float(r.mean_score)),
            r.status,
        ])
    return buf.getvalue()
