"""Non-negative model primitives: sparse encoding, projection, losses, normalization.

Data are stored column-wise: a data matrix ``U`` is ``m x N`` (one sample per
column), a basis ``W`` is ``m x d`` and a latent matrix ``H`` is ``d x N``.
The encoding objective is ``0.5 * ||U - W H||_F^2 + lam * |H|_1``, which is the
objective the multiplicative update actually descends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

__all__ = [
    "MDNMFError",
    "ValidationError",
    "DimensionError",
    "ConfigurationError",
    "EncodeConfig",
    "as_nonneg",
    "h_update_step",
    "encode",
    "encode_objective",
    "project",
    "weak_loss",
    "full_loss",
    "normalize_columns",
]


class MDNMFError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MDNMFError, ValueError):
    """Input contains NaN/Inf or negative entries."""


class DimensionError(MDNMFError, ValueError):
    """Matrix shapes do not agree."""


class ConfigurationError(MDNMFError, ValueError):
    """Inconsistent hyperparameters or missing data for a requested term."""


@dataclass(frozen=True)
class EncodeConfig:
    """Settings for the sparse non-negative encoder.

    Parameters
    ----------
    lam : float
        Sparsity weight on ``|H|_1``.
    max_iters : int
        Upper bound on multiplicative sweeps.
    rel_tol : float
        Stop once the relative objective decrease falls below this value.
        ``0`` runs exactly ``max_iters`` sweeps.
    column_scale : array_like, optional
        Per-column multipliers of ``lam`` (one non-negative entry per data column).
    row_scale : array_like, optional
        Per-atom multipliers of ``lam``; lets concatenated bases carry their own
        sparsity weights.
    floor : float, optional
        If set, entries are clamped below at this value after every sweep so that
        atoms can leave the absorbing zero state.
    """

    lam: float = 0.0
    max_iters: int = 200
    rel_tol: float = 1e-6
    column_scale: Optional[np.ndarray] = None
    row_scale: Optional[np.ndarray] = None
    floor: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ConfigurationError(f"rel_tol must be >= 0, got {self.rel_tol}")
        for name in ("column_scale", "row_scale"):
            value = getattr(self, name)
            if value is None:
                continue
            scale = np.asarray(value, dtype=float)
            if scale.ndim != 1 or not np.all(np.isfinite(scale)) or np.any(scale < 0):
                raise ConfigurationError(f"{name} must be a 1-D non-negative vector")
            object.__setattr__(self, name, scale)

    def _scales(self, n_atoms: int, n_cols: int):
        rows = np.ones(n_atoms) if self.row_scale is None else self.row_scale
        cols = np.ones(n_cols) if self.column_scale is None else self.column_scale
        if rows.shape[0] != n_atoms:
            raise DimensionError(f"row_scale has {rows.shape[0]} entries, basis has {n_atoms} atoms")
        if cols.shape[0] != n_cols:
            raise DimensionError(f"column_scale has {cols.shape[0]} entries, data has {n_cols} columns")
        return self.lam * rows, cols

    def lam_for(self, n_atoms: int, n_cols: int):
        """Sparsity weight broadcastable against a ``n_atoms x n_cols`` latent."""
        if self.column_scale is None and self.row_scale is None:
            return self.lam
        rows, cols = self._scales(n_atoms, n_cols)
        return rows[:, None] * cols[None, :]


def as_nonneg(X, name: str = "matrix") -> np.ndarray:
    """Return ``X`` as a 2-D float array, raising if it is not finite and non-negative."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains NaN or Inf")
    if np.any(X < 0):
        raise ValidationError(f"{name} has negative entries")
    return X


def _check_triple(W, H, U):
    if W.shape[0] != U.shape[0]:
        raise DimensionError(f"basis has {W.shape[0]} rows, data has {U.shape[0]}")
    if H is not None and (H.shape[0] != W.shape[1] or H.shape[1] != U.shape[1]):
        raise DimensionError(
            f"latent shape {H.shape} does not match ({W.shape[1]}, {U.shape[1]})"
        )


def _times_ratio(X, num, den):
    """``X * num / den`` with 0/0 -> 0.

    The product is formed before the division so that a zero entry of ``X``
    stays exactly zero even when ``num / den`` alone would overflow.
    """
    top = X * num
    return np.divide(top, den, out=np.zeros_like(top), where=den > 0)


def _h_sweep(H, WtU, WtW, lam):
    return _times_ratio(H, WtU, WtW @ H + lam)


def h_update_step(H, W, U, cfg: EncodeConfig = EncodeConfig()) -> np.ndarray:
    """One multiplicative sweep ``H * (W^T U) / (W^T W H + lam)``.

    Zero entries of ``H`` stay zero (unless ``cfg.floor`` is set).
    """
    W = as_nonneg(W, "W")
    U = as_nonneg(U, "U")
    H = as_nonneg(H, "H")
    _check_triple(W, H, U)
    out = _h_sweep(H, W.T @ U, W.T @ W, cfg.lam_for(W.shape[1], U.shape[1]))
    if cfg.floor is not None:
        np.maximum(out, cfg.floor, out=out)
    return out


def init_latent(W, U) -> np.ndarray:
    """Strictly positive starting point ``max(W^T U, 1e-3 * max(W^T U))``.

    The floor is relative so that the encoder is exactly scale-equivariant.
    """
    WtU = W.T @ U
    top = WtU.max() if WtU.size else 0.0
    floor = 1e-3 * top if top > 0 else 1e-3
    return np.maximum(WtU, floor)


def encode_objective(W, U, H, lam=0.0, column_scale=None, row_scale=None) -> float:
    """``0.5 * ||U - W H||_F^2 + sum_kj lam * r_k * c_j * H[k, j]``."""
    W = np.asarray(W, dtype=float)
    U = np.asarray(U, dtype=float)
    H = np.asarray(H, dtype=float)
    R = U - W @ H
    rows = np.ones(H.shape[0]) if row_scale is None else np.asarray(row_scale, dtype=float)
    cols = np.ones(H.shape[1]) if column_scale is None else np.asarray(column_scale, dtype=float)
    penalty = lam * float(rows @ H @ cols)
    return 0.5 * float(np.vdot(R, R)) + penalty


@numba.njit(cache=True)
def _encode_columns(Ht, WtUt, WtW, lam_rows, lam_cols, half_norms, max_iters, rel_tol, floor):
    # Ht, WtUt: N x d (one latent column per row); iterates each column to its own stop
    n_cols, d = Ht.shape
    eps = np.finfo(np.float64).eps
    tiny = np.finfo(np.float64).tiny
    g = np.empty(d)
    used = 0
    for j in range(n_cols):
        h = Ht[j]
        b = WtUt[j]
        c = lam_cols[j]
        noise = eps * max(half_norms[j], tiny)
        prev = 0.0
        it = 0
        while it < max_iters:
            obj = half_norms[j]
            for k in range(d):
                s = 0.0
                for l in range(d):
                    s += WtW[k, l] * h[l]
                g[k] = s
                obj += h[k] * (0.5 * s - b[k] + lam_rows[k] * c)
            if it > 0 and rel_tol > 0 and abs(prev - obj) <= rel_tol * max(abs(prev), noise):
                break
            prev = obj
            for k in range(d):
                den = g[k] + lam_rows[k] * c
                if den > 0:
                    h[k] = h[k] * b[k] / den
                else:
                    h[k] = 0.0
                if floor >= 0 and h[k] < floor:
                    h[k] = floor
            it += 1
        if it > used:
            used = it
    return used


def encode(W, U, cfg: EncodeConfig = EncodeConfig(), H0=None) -> np.ndarray:
    """Approximate ``argmin_{H >= 0} 0.5 ||U - W H||^2 + lam |H|_1`` by repeated sweeps.

    The problem separates over columns, so each column is swept until its own
    relative objective change drops below ``cfg.rel_tol`` (or ``cfg.max_iters``).
    """
    W = as_nonneg(W, "W")
    U = as_nonneg(U, "U")
    _check_triple(W, None, U)
    if H0 is None:
        H = init_latent(W, U)
    else:
        H = as_nonneg(H0, "H0")
        _check_triple(W, H, U)
    lam_rows, lam_cols = cfg._scales(W.shape[1], U.shape[1])
    Ht = np.ascontiguousarray(H.T, dtype=float)
    _encode_columns(
        Ht,
        np.ascontiguousarray((W.T @ U).T),
        np.ascontiguousarray(W.T @ W),
        np.ascontiguousarray(lam_rows, dtype=float),
        np.ascontiguousarray(lam_cols, dtype=float),
        0.5 * np.einsum("ij,ij->j", U, U),
        int(cfg.max_iters),
        float(cfg.rel_tol),
        -1.0 if cfg.floor is None else float(cfg.floor),
    )
    return Ht.T.copy()


def project(W, U, cfg: EncodeConfig = EncodeConfig()) -> np.ndarray:
    """Reconstruction ``W @ encode(W, U)``: the data pulled onto the basis cone."""
    W = as_nonneg(W, "W")
    return W @ encode(W, U, cfg)


def weak_loss(W, U, H) -> float:
    """Mean squared reconstruction error per sample, ``||U - W H||_F^2 / N``."""
    W = np.asarray(W, dtype=float)
    U = np.asarray(U, dtype=float)
    H = np.asarray(H, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if H.ndim == 1:
        H = H[:, None]
    _check_triple(W, H, U)
    R = W @ H
    np.subtract(U, R, out=R)
    return float(np.vdot(R, R)) / U.shape[1]


def full_loss(
    W,
    weak=None,
    adversarial=None,
    strong=None,
    tau_w: float = 1.0,
    tau_a: float = 0.0,
    tau_s: float = 0.0,
    gamma: float = 0.0,
) -> float:
    """Combined training loss for one basis with its latents held fixed.

    ``0.5 * (tau_w * e_W - tau_a * e_A + tau_s * e_S) + gamma * |W|_1`` where each
    ``e_*`` is the per-sample squared error (:func:`weak_loss`) on the pair
    ``(data, latent)`` given for that term. This is the quantity the basis update
    does not increase.
    """
    total = 0.0
    for name, tau, pair, sign in (
        ("weak", tau_w, weak, 1.0),
        ("adversarial", tau_a, adversarial, -1.0),
        ("strong", tau_s, strong, 1.0),
    ):
        if tau < 0:
            raise ConfigurationError(f"tau for the {name} term must be >= 0")
        if tau == 0:
            continue
        if pair is None:
            raise ConfigurationError(f"tau for the {name} term is {tau} but no data was given")
        U, H = pair
        total += sign * 0.5 * tau * weak_loss(W, U, H)
    if gamma:
        total += gamma * float(np.abs(W).sum())
    return total


def normalize_columns(W, attached: Sequence = ()):
    """Scale nonzero columns of ``W`` to unit norm and rescale latent rows to match.

    All-zero columns are left as they are. Returns ``(W, [H, ...])`` as new arrays.
    """
    W = np.array(W, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->j", W, W))
    live = norms > 0
    W[:, live] /= norms[live]
    rows = np.where(live, norms, 1.0)[:, None]
    out = []
    for H in attached:
        H = np.asarray(H, dtype=float)
        if H.shape[0] != W.shape[1]:
            raise DimensionError(f"latent has {H.shape[0]} rows, basis has {W.shape[1]} columns")
        out.append(H * rows)
    return W, out
