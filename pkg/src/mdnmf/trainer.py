"""Stochastic multiplicative-update training of NMF bases.

One routine covers every variant through the weights of the three loss terms
(weak fit, adversarial fit with a minus sign, strong-supervision separation
error):

=========  =====  =====  =====
variant    tau_w  tau_a  tau_s
=========  =====  =====  =====
nmf        1      0      0
mdnmf      1      >0     0
dnmf       0      0      1
d+mdnmf    >0     >0     >0
=========  =====  =====  =====
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .adversarial import ScaledDataset
from .batching import STRATEGIES, BatchPlan
from .core import (
    ConfigurationError,
    DimensionError,
    EncodeConfig,
    _h_sweep,
    _times_ratio,
    as_nonneg,
    encode,
    full_loss,
    normalize_columns,
)

__all__ = [
    "PRESETS",
    "TrainConfig",
    "SourceBundle",
    "EpochRecord",
    "ConvergenceTrace",
    "w_update_step",
    "init_exemplar",
    "init_random",
    "train",
    "train_semi_supervised",
    "semi_objective",
]

log = logging.getLogger(__name__)

# (tau_w, tau_a, tau_s) defaults per variant
PRESETS = {
    "nmf": (1.0, 0.0, 0.0),
    "mdnmf": (1.0, 0.2, 0.0),
    "dnmf": (0.0, 0.0, 1.0),
    "d+mdnmf": (1.0, 0.2, 0.5),
}


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train` and :func:`train_semi_supervised`.

    ``d`` and ``lam`` may be given per source. ``batch_size`` is either one
    size for every term, a mapping ``{"weak": .., "adversarial": .., "strong": ..}``,
    or ``None`` for full-batch (deterministic) updates.
    """

    d: Union[int, Sequence[int]] = 16
    lam: Union[float, Sequence[float]] = 1e-2
    gamma: float = 1e-10
    tau_w: float = 1.0
    tau_a: float = 0.0
    tau_s: float = 0.0
    epochs: int = 50
    batch_size: Union[None, int, dict] = None
    batch_strategy: str = "undersample"
    balanced_batches: bool = False
    designated: str = "weak"
    init: str = "exemplar"
    seed: int = 0
    entry_floor: Optional[float] = None
    encode_steps: int = 1
    init_encode_iters: int = 10
    scale_sparsity: Optional[bool] = None
    strong_as_weak: bool = False
    reseed_dead_atoms: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be > 0, got {self.gamma}")
        for name in ("tau_w", "tau_a", "tau_s"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.tau_w == self.tau_a == self.tau_s == 0:
            raise ConfigurationError("at least one of tau_w, tau_a, tau_s must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_strategy not in STRATEGIES:
            raise ConfigurationError(f"batch_strategy must be one of {STRATEGIES}")
        if self.init not in ("exemplar", "random"):
            raise ConfigurationError("init must be 'exemplar' or 'random'")
        if self.encode_steps < 1:
            raise ConfigurationError("encode_steps must be >= 1")

    @classmethod
    def preset(cls, mode: str, **overrides) -> "TrainConfig":
        """Config for a named variant; rejects tau overrides that break its pattern."""
        if mode not in PRESETS:
            raise ConfigurationError(f"unknown mode {mode!r}; choose from {sorted(PRESETS)}")
        tau_w, tau_a, tau_s = PRESETS[mode]
        values = dict(tau_w=tau_w, tau_a=tau_a, tau_s=tau_s)
        values.update({k: v for k, v in overrides.items() if k in values and v is not None})
        check_preset(mode, values["tau_w"], values["tau_a"], values["tau_s"])
        rest = {k: v for k, v in overrides.items() if k not in values}
        return cls(**values, **rest)

    def d_for(self, i: int) -> int:
        return int(self.d if np.isscalar(self.d) else self.d[i])

    def lam_for(self, i: int) -> float:
        return float(self.lam if np.isscalar(self.lam) else self.lam[i])

    def sparsity_scaling(self) -> bool:
        if self.scale_sparsity is not None:
            return self.scale_sparsity
        lams = [self.lam] if np.isscalar(self.lam) else list(self.lam)
        return max(lams) > 1e-6


def check_preset(mode: str, tau_w: float, tau_a: float, tau_s: float) -> None:
    """Raise unless the tau triple has the zero/nonzero pattern of ``mode``."""
    ok = {
        "nmf": tau_w == 1 and tau_a == 0 and tau_s == 0,
        "mdnmf": tau_w == 1 and tau_a > 0 and tau_s == 0,
        "dnmf": tau_w == 0 and tau_a == 0 and tau_s == 1,
        "d+mdnmf": tau_w > 0 and tau_a > 0 and tau_s > 0,
    }
    if mode not in ok:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if not ok[mode]:
        raise ConfigurationError(
            f"mode {mode} does not allow (tau_w, tau_a, tau_s) = ({tau_w}, {tau_a}, {tau_s})"
        )


@dataclass
class SourceBundle:
    """Training data for one source.

    ``strong_sources`` holds this source's true components of the paired
    mixtures in ``strong_mixed`` (same column order), scaled so that the
    components of all sources add up to the mixtures.
    """

    weak: Optional[np.ndarray] = None
    adversarial: Optional[ScaledDataset] = None
    strong_sources: Optional[np.ndarray] = None
    strong_mixed: Optional[np.ndarray] = None

    def __post_init__(self):
        dims = set()
        if self.weak is not None:
            self.weak = as_nonneg(self.weak, "weak data")
            dims.add(self.weak.shape[0])
        if self.adversarial is not None:
            if not isinstance(self.adversarial, ScaledDataset):
                self.adversarial = ScaledDataset(as_nonneg(self.adversarial, "adversarial data"))
            dims.add(self.adversarial.data.shape[0])
        if self.strong_sources is not None:
            self.strong_sources = as_nonneg(self.strong_sources, "strong sources")
            dims.add(self.strong_sources.shape[0])
        if self.strong_mixed is not None:
            self.strong_mixed = as_nonneg(self.strong_mixed, "strong mixed")
            dims.add(self.strong_mixed.shape[0])
        if len(dims) > 1:
            raise DimensionError(f"bundle members disagree on the feature dimension: {dims}")
        if (self.strong_sources is None) != (self.strong_mixed is None):
            raise ConfigurationError("strong_sources and strong_mixed must be given together")
        if self.strong_sources is not None and self.strong_sources.shape[1] != self.strong_mixed.shape[1]:
            raise DimensionError("strong_sources and strong_mixed need the same number of columns")

    @property
    def n_features(self) -> int:
        for X in (self.weak, self.strong_sources, self.strong_mixed):
            if X is not None:
                return X.shape[0]
        return self.adversarial.data.shape[0]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    seconds: float


@dataclass
class ConvergenceTrace:
    """Per-epoch loss of one source's training run."""

    source: int = 0
    records: List[EpochRecord] = field(default_factory=list)
    initial_loss: Optional[float] = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_csv(self, timing: bool = False) -> str:
        """``epoch,loss`` rows (row 0 is the initial loss when known).

        Wall-clock seconds are left out unless ``timing`` is set, so that
        reruns with the same seed give byte-identical files.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "loss", "seconds"] if timing else ["epoch", "loss"])
        rows = list(self.records)
        if self.initial_loss is not None:
            rows.insert(0, EpochRecord(0, self.initial_loss, 0.0))
        for r in rows:
            row = [r.epoch, repr(float(r.loss))]
            if timing:
                row.append(f"{r.seconds:.6f}")
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: int = 0) -> "ConvergenceTrace":
        trace = cls(source)
        for r in csv.DictReader(io.StringIO(text)):
            rec = EpochRecord(int(r["epoch"]), float(r["loss"]), float(r.get("seconds") or 0.0))
            if rec.epoch == 0:
                trace.initial_loss = rec.loss
            else:
                trace.records.append(rec)
        return trace


def w_update_step(
    W,
    weak=None,
    adversarial=None,
    strong=None,
    tau_w: float = 1.0,
    tau_a: float = 0.0,
    tau_s: float = 0.0,
    gamma: float = 1e-10,
    counts=None,
    floor: Optional[float] = None,
) -> np.ndarray:
    """One multiplicative basis update with all three loss terms.

    ``weak``, ``adversarial`` and ``strong`` are ``(data, latent)`` pairs; a term
    whose tau is zero may be ``None``. Each term is averaged over its own column
    count (``counts`` overrides those counts).
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be > 0, got {gamma}")
    W = np.asarray(W, dtype=float)
    num = np.zeros_like(W)
    den = np.zeros_like(W)
    terms = (("weak", tau_w, weak), ("adversarial", tau_a, adversarial), ("strong", tau_s, strong))
    for k, (name, tau, pair) in enumerate(terms):
        if tau == 0:
            continue
        if pair is None:
            raise ConfigurationError(f"tau for the {name} term is {tau} but no data was given")
        U, H = pair
        if U.shape[0] != W.shape[0] or H.shape[0] != W.shape[1] or H.shape[1] != U.shape[1]:
            raise DimensionError(f"{name} term shapes {U.shape}, {H.shape} do not fit basis {W.shape}")
        n = U.shape[1] if counts is None else counts[k]
        data_term = (tau / n) * (U @ H.T)
        model_term = (tau / n) * (W @ (H @ H.T))
        if name == "adversarial":
            num += model_term
            den += data_term
        else:
            num += data_term
            den += model_term
    out = _times_ratio(W, num, den + gamma)
    if floor is not None:
        np.maximum(out, floor, out=out)
    return out


def init_exemplar(U, d: int, seed=0) -> np.ndarray:
    """``d`` randomly chosen data columns, normalized (with replacement if ``d > N``)."""
    U = as_nonneg(U, "U")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = U.shape[1]
    idx = rng.choice(N, size=d, replace=d > N)
    W, _ = normalize_columns(U[:, idx])
    return W


def init_random(m: int, d: int, seed=0) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    W, _ = normalize_columns(rng.uniform(size=(m, d)))
    return W


def _cols(X, idx):
    """``X[:, idx]``, without the copy when ``idx`` is every column in order."""
    if idx.size == X.shape[1] and np.array_equal(idx, np.arange(idx.size)):
        return X
    return X[:, idx]


def _sweeps(H, W, U, lam, steps, floor):
    WtU = W.T @ U
    WtW = W.T @ W
    for _ in range(steps):
        H = _h_sweep(H, WtU, WtW, lam)
        if floor is not None:
            np.maximum(H, floor, out=H)
    return H


class _SourceState:
    def __init__(self, index, W, weak, adversarial, strong, lam, adv_lam):
        self.index = index
        self.W = W
        self.weak = weak
        self.adversarial = adversarial
        self.strong = strong
        self.lam = lam
        self.adv_lam = adv_lam
        self.H = None
        self.H_adv = None


def _validate(bundles: Sequence[SourceBundle], cfg: TrainConfig):
    if not bundles:
        raise ConfigurationError("no sources to train")
    dims = {b.n_features for b in bundles}
    if len(dims) != 1:
        raise DimensionError(f"sources have different feature dimensions: {dims}")
    if cfg.tau_s > 0:
        if any(b.strong_sources is None for b in bundles):
            raise ConfigurationError("tau_s > 0 needs strong-supervision data for every source")
        shapes = {b.strong_mixed.shape for b in bundles}
        if len(shapes) != 1:
            raise DimensionError("strong mixtures differ between sources")
    if cfg.tau_a > 0 and any(b.adversarial is None for b in bundles):
        raise ConfigurationError("tau_a > 0 needs adversarial data for every source")
    if cfg.tau_w > 0:
        for i, b in enumerate(bundles):
            if b.weak is None and not (cfg.strong_as_weak and b.strong_sources is not None):
                raise ConfigurationError(f"tau_w > 0 needs weak data for source {i}")


def train(
    bundles: Sequence[SourceBundle],
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[int, EpochRecord], None]] = None,
    init_bases: Optional[Sequence[np.ndarray]] = None,
):
    """Fit one basis per source; returns ``(bases, traces)``.

    Each epoch reshuffles the data, refreshes the strong latents against the
    concatenated bases, then per source refreshes the weak and adversarial
    latents and sweeps the batches with :func:`w_update_step`. The epoch ends
    with column normalization of every basis. ``on_epoch(source, record)`` is
    called as soon as each record exists.
    """
    _validate(bundles, cfg)
    rng = np.random.default_rng(cfg.seed)
    S = len(bundles)
    m = bundles[0].n_features
    scale_sparsity = cfg.sparsity_scaling()

    states = []
    for i, b in enumerate(bundles):
        weak = b.weak
        if cfg.strong_as_weak and b.strong_sources is not None:
            weak = b.strong_sources if weak is None else np.hstack([weak, b.strong_sources])
        d = cfg.d_for(i)
        if init_bases is not None:
            W = normalize_columns(as_nonneg(init_bases[i], f"initial basis {i}"))[0]
        elif cfg.init == "exemplar":
            pool = weak if weak is not None else b.strong_sources
            if pool is None:
                raise ConfigurationError(f"exemplar init for source {i} needs weak or strong data")
            W = init_exemplar(pool, d, rng)
        else:
            W = init_random(m, d, rng)
        lam = cfg.lam_for(i)
        adv_lam = lam
        if b.adversarial is not None and scale_sparsity:
            adv_lam = lam * b.adversarial.lambda_scale[None, :]
        states.append(_SourceState(i, W, weak if cfg.tau_w > 0 else None,
                                   b.adversarial if cfg.tau_a > 0 else None,
                                   b.strong_sources if cfg.tau_s > 0 else None, lam, adv_lam))

    init_cfg = dict(max_iters=cfg.init_encode_iters, rel_tol=0.0, floor=cfg.entry_floor)
    for st in states:
        if st.weak is not None:
            st.H = encode(st.W, st.weak, EncodeConfig(lam=st.lam, **init_cfg))
        if st.adversarial is not None:
            scale = st.adversarial.lambda_scale if scale_sparsity else None
            st.H_adv = encode(st.W, st.adversarial.data, EncodeConfig(lam=st.lam, column_scale=scale, **init_cfg))

    V_strong = bundles[0].strong_mixed if cfg.tau_s > 0 else None
    offsets = np.cumsum([0] + [st.W.shape[1] for st in states])
    strong_lam = None
    H_strong = None
    if V_strong is not None:
        strong_lam = np.concatenate([np.full(st.W.shape[1], st.lam) for st in states])[:, None]
        H_strong = encode(np.hstack([st.W for st in states]), V_strong,
                          EncodeConfig(lam=1.0, row_scale=strong_lam[:, 0], **init_cfg))

    plans = []
    for st in states:
        sizes = {}
        if st.weak is not None:
            sizes["weak"] = st.weak.shape[1]
        if st.adversarial is not None:
            sizes["adversarial"] = st.adversarial.n_cols
        if st.strong is not None:
            sizes["strong"] = st.strong.shape[1]
        plans.append(BatchPlan(sizes, cfg.batch_size, cfg.batch_strategy, cfg.designated,
                               shuffle=cfg.batch_size is not None, balanced=cfg.balanced_batches))

    traces = [ConvergenceTrace(source=i) for i in range(S)]

    def source_loss(st):
        Hs = None if H_strong is None else H_strong[offsets[st.index]:offsets[st.index + 1]]
        return full_loss(
            st.W,
            weak=None if st.weak is None else (st.weak, st.H),
            adversarial=None if st.adversarial is None else (st.adversarial.data, st.H_adv),
            strong=None if st.strong is None else (st.strong, Hs),
            tau_w=cfg.tau_w if st.weak is not None else 0.0,
            tau_a=cfg.tau_a,
            tau_s=cfg.tau_s,
        )

    for st, tr in zip(states, traces):
        tr.initial_loss = source_loss(st)

    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        schedules = [plan.epoch(rng) for plan in plans]
        if H_strong is not None:
            H_strong = _sweeps(H_strong, np.hstack([st.W for st in states]), V_strong,
                               strong_lam, cfg.encode_steps, cfg.entry_floor)
        for st, schedule in zip(states, schedules):
            if st.weak is not None:
                st.H = _sweeps(st.H, st.W, st.weak, st.lam, cfg.encode_steps, cfg.entry_floor)
            if st.adversarial is not None:
                st.H_adv = _sweeps(st.H_adv, st.W, st.adversarial.data, st.adv_lam,
                                   cfg.encode_steps, cfg.entry_floor)
            lo, hi = offsets[st.index], offsets[st.index + 1]
            for batch in schedule:
                weak = adv = strong = None
                if st.weak is not None:
                    idx = batch["weak"]
                    weak = (_cols(st.weak, idx), _cols(st.H, idx))
                if st.adversarial is not None:
                    idx = batch["adversarial"]
                    adv = (_cols(st.adversarial.data, idx), _cols(st.H_adv, idx))
                if st.strong is not None:
                    idx = batch["strong"]
                    strong = (_cols(st.strong, idx), _cols(H_strong[lo:hi], idx))
                st.W = w_update_step(
                    st.W, weak, adv, strong,
                    tau_w=cfg.tau_w if weak is not None else 0.0,
                    tau_a=cfg.tau_a, tau_s=cfg.tau_s,
                    gamma=cfg.gamma, floor=cfg.entry_floor,
                )
        for st in states:
            lo, hi = offsets[st.index], offsets[st.index + 1]
            attached = [X for X in (st.H, st.H_adv) if X is not None]
            if H_strong is not None:
                attached.append(H_strong[lo:hi])
            st.W, rescaled = normalize_columns(st.W, attached)
            if st.H is not None:
                st.H = rescaled.pop(0)
            if st.H_adv is not None:
                st.H_adv = rescaled.pop(0)
            if H_strong is not None:
                H_strong[lo:hi] = rescaled.pop(0)
            if cfg.reseed_dead_atoms:
                _reseed(st, rng, H_strong, lo)
        elapsed = time.perf_counter() - start
        for st, tr in zip(states, traces):
            rec = EpochRecord(epoch, source_loss(st), elapsed)
            tr.records.append(rec)
            if on_epoch is not None:
                on_epoch(st.index, rec)
        log.debug("epoch %d losses %s", epoch, [tr.records[-1].loss for tr in traces])

    return [st.W for st in states], traces


def _reseed(st, rng, H_strong, lo):
    dead = np.flatnonzero(~st.W.any(axis=0))
    if dead.size == 0 or st.weak is None:
        return
    for k in dead:
        col = st.weak[:, rng.integers(st.weak.shape[1])]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        st.W[:, k] = col / norm
        for H in (st.H, st.H_adv):
            if H is not None:
                H[k] = 1e-3
        if H_strong is not None:
            H_strong[lo + k] = 1e-3


def semi_objective(bases: Sequence[np.ndarray], latents: Sequence[np.ndarray], V, lam) -> float:
    """``0.5 ||V - sum_i W_i H_i||^2 / N + sum_i lam_i |H_i|_1 / N``."""
    V = np.asarray(V, dtype=float)
    lams = [lam] * len(bases) if np.isscalar(lam) else list(lam)
    R = V - sum(W @ H for W, H in zip(bases, latents))
    penalty = sum(l * H.sum() for l, H in zip(lams, latents))
    return (0.5 * float(np.vdot(R, R)) + penalty) / V.shape[1]


def train_semi_supervised(
    known: Sequence[np.ndarray],
    mixed,
    cfg: TrainConfig,
    return_state: bool = False,
):
    """Fit a basis for an unseen source from mixtures, holding the known bases fixed.

    ``cfg.d`` / ``cfg.lam`` given as sequences are indexed by source with the
    unknown source last. The latents of every source are refreshed by one
    sweep against the concatenated basis per epoch; the unknown basis is then
    updated batch by batch over the mixture columns.
    """
    V = as_nonneg(mixed, "mixed")
    known = [as_nonneg(W, f"known basis {i}") for i, W in enumerate(known)]
    for W in known:
        if W.shape[0] != V.shape[0]:
            raise DimensionError(f"known basis has {W.shape[0]} rows, mixtures have {V.shape[0]}")
    S = len(known) + 1
    rng = np.random.default_rng(cfg.seed)
    d_s = cfg.d_for(S - 1)
    if cfg.init == "exemplar":
        W_s = init_exemplar(V, d_s, rng)
    else:
        W_s = init_random(V.shape[0], d_s, rng)
    lams = [cfg.lam_for(i) for i in range(S)]
    sizes = [W.shape[1] for W in known] + [d_s]
    row_lam = np.concatenate([np.full(n, l) for n, l in zip(sizes, lams)])
    offsets = np.cumsum([0] + sizes)

    def blocks(H):
        return [H[offsets[i]:offsets[i + 1]] for i in range(S)]

    W_all = np.hstack(known + [W_s])
    H = encode(W_all, V, EncodeConfig(lam=1.0, row_scale=row_lam, max_iters=cfg.init_encode_iters,
                                      rel_tol=0.0, floor=cfg.entry_floor))
    plan = BatchPlan({"mixed": V.shape[1]},
                     None if cfg.batch_size is None else
                     (cfg.batch_size.get("mixed") if isinstance(cfg.batch_size, dict) else cfg.batch_size),
                     cfg.batch_strategy, "mixed", shuffle=cfg.batch_size is not None,
                     balanced=cfg.balanced_batches)
    trace = ConvergenceTrace(source=S - 1)
    trace.initial_loss = semi_objective(known + [W_s], blocks(H), V, lams)
    lo = offsets[-2]
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        schedule = plan.epoch(rng)
        W_all = np.hstack(known + [W_s])
        H = _sweeps(H, W_all, V, row_lam[:, None], cfg.encode_steps, cfg.entry_floor)
        R_known = np.hstack(known) @ H[:lo] if known else np.zeros_like(V)
        for batch in schedule:
            idx = batch["mixed"]
            Hs = _cols(H[lo:], idx)
            n = idx.size
            num = (_cols(V, idx) @ Hs.T) / n
            den = ((_cols(R_known, idx) + W_s @ Hs) @ Hs.T) / n + cfg.gamma
            W_s = _times_ratio(W_s, num, den)
            if cfg.entry_floor is not None:
                np.maximum(W_s, cfg.entry_floor, out=W_s)
        W_s, (Hs,) = normalize_columns(W_s, [H[lo:]])
        H = H.copy()
        H[lo:] = Hs
        loss = semi_objective(known + [W_s], blocks(H), V, lams)
        trace.records.append(EpochRecord(epoch, loss, time.perf_counter() - start))
    if return_state:
        return W_s, blocks(H), trace
    return W_s
