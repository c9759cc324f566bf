"""Latent-factor models: implicit-feedback alternating least squares and
plain SGD matrix factorization, plus single-user fold-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .ranking import popularity_ranking, rank_items
from .sparse import InteractionMatrix, NumericalError, transpose

INIT_SCALE = 0.01  # factors start uniform in [-0.01, 0.01]


@dataclass(frozen=True)
class AlsConfig:
    factors: int = 50
    iterations: int = 20
    reg: float = 0.01
    confidence_alpha: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.factors < 1:
            raise ValueError("factors must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.reg <= 0:
            raise ValueError("reg must be > 0")
        if self.confidence_alpha < 0:
            raise ValueError("confidence_alpha must be >= 0")


@dataclass(frozen=True)
class SgdConfig:
    factors: int = 50
    epochs: int = 30
    learning_rate: float = 0.01
    reg: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.factors < 1:
            raise ValueError("factors must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.reg <= 0:
            raise ValueError("reg must be > 0")


@dataclass(frozen=True)
class LatentModel:
    """Dense user and item factor matrices with a shared rank."""

    user_factors: np.ndarray
    item_factors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "user_factors", np.asarray(self.user_factors, dtype=np.float64))
        object.__setattr__(self, "item_factors", np.asarray(self.item_factors, dtype=np.float64))
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2:
            raise ValueError("factor matrices must be 2-D")
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factors must share the inner dimension")
        if not (np.all(np.isfinite(self.user_factors)) and np.all(np.isfinite(self.item_factors))):
            raise ValueError("factor matrices must be finite")

    @property
    def rank(self) -> int:
        return self.user_factors.shape[1]


def initial_factors(n_rows: int, n_cols: int, factors: int, seed: int):
    """Seed-determined uniform init; the row matrix is drawn first."""
    rng = np.random.default_rng(seed)
    left = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_rows, factors))
    right = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_cols, factors))
    return left, right, rng


def _solve_factor_row(other: np.ndarray, gram: np.ndarray, cols: np.ndarray,
                      reg: float, alpha: float) -> np.ndarray:
    """Exact least-squares row solve against frozen opposite factors.

    Minimizes sum_i c_i (p_i - w . v_i)^2 + reg * |w|^2 with confidence
    c = 1 + alpha on observed columns and 1 elsewhere; ``gram`` is
    other^T other precomputed once per half-step.
    """
    f = other.shape[1]
    if len(cols) == 0:
        return np.zeros(f)
    m = other[cols]
    a = gram + alpha * (m.T @ m) + reg * np.eye(f)
    b = (1.0 + alpha) * m.sum(axis=0)
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise NumericalError("normal-equation solve failed (regularization too small?)") from None


def _half_step(mat: InteractionMatrix, other: np.ndarray, reg: float, alpha: float) -> np.ndarray:
    gram = other.T @ other
    out = np.zeros((mat.n_rows, other.shape[1]))
    for r in range(mat.n_rows):
        lo, hi = int(mat.row_offsets[r]), int(mat.row_offsets[r + 1])
        out[r] = _solve_factor_row(other, gram, mat.col_indices[lo:hi], reg, alpha)
    return out


def implicit_objective(train: InteractionMatrix, model: LatentModel, cfg: AlsConfig) -> float:
    """Confidence-weighted squared error over all user-item cells plus
    the L2 penalty, computed without materializing the dense product."""
    u, v = model.user_factors, model.item_factors
    base = float(np.sum((u.T @ u) * (v.T @ v)))  # sum of squared predictions
    rows = train.row_ids()
    cols = train.col_indices
    s = np.einsum("ij,ij->i", u[rows], v[cols])
    correction = float(np.sum((1.0 + cfg.confidence_alpha) * (1.0 - s) ** 2 - s**2))
    penalty = cfg.reg * (float(np.sum(u * u)) + float(np.sum(v * v)))
    return base + correction + penalty


def fit_als(
    train: InteractionMatrix,
    cfg: AlsConfig = AlsConfig(),
    *,
    track_objective: bool = False,
):
    """Alternating exact row solves on the implicit-feedback objective.

    Each round runs a full user step then a full item step; both steps
    minimize the objective exactly for their side, so the full-round
    objective never increases.
    """
    user_f, item_f, _ = initial_factors(train.n_rows, train.n_cols, cfg.factors, cfg.seed)
    train_t = transpose(train)
    objectives = []
    for _ in range(cfg.iterations):
        user_f = _half_step(train, item_f, cfg.reg, cfg.confidence_alpha)
        item_f = _half_step(train_t, user_f, cfg.reg, cfg.confidence_alpha)
        if track_objective:
            objectives.append(
                implicit_objective(train, LatentModel(user_f, item_f), cfg)
            )
    model = LatentModel(user_f, item_f)
    if track_objective:
        return model, np.asarray(objectives)
    return model


def fold_in_user(
    model: LatentModel,
    cfg: AlsConfig,
    new_user_items,
    *,
    gram: np.ndarray | None = None,
) -> np.ndarray:
    """Factor row for an unseen user against frozen item factors.

    Runs the same confidence-weighted solve as a training user step; an
    empty history yields the zero vector.  ``gram`` may carry a
    precomputed item_factors^T item_factors when folding in many users.
    """
    items = np.asarray(new_user_items, dtype=np.int64)
    if len(items) == 0:
        return np.zeros(model.rank)
    if items.min() < 0 or items.max() >= model.item_factors.shape[0]:
        raise IndexError("item index out of bounds for the factor matrix")
    if gram is None:
        gram = model.item_factors.T @ model.item_factors
    return _solve_factor_row(model.item_factors, gram, items, cfg.reg, cfg.confidence_alpha)


@njit(cache=True, nogil=True)
def _sgd_pair_step(u_row, v_row, lr, reg):  # pragma: no cover - compiled
    """One SGD update on a single (user, item) positive, in place.

    The error term uses the pre-update vectors on both sides.
    """
    f = u_row.shape[0]
    e = 1.0
    for t in range(f):
        e -= u_row[t] * v_row[t]
    for t in range(f):
        old_u = u_row[t]
        old_v = v_row[t]
        u_row[t] = old_u + lr * (e * old_v - reg * old_u)
        v_row[t] = old_v + lr * (e * old_u - reg * old_v)


@njit(cache=True, nogil=True)
def _sgd_epoch(user_f, item_f, users, items, order, lr, reg):  # pragma: no cover - compiled
    for p in order:
        _sgd_pair_step(user_f[users[p]], item_f[items[p]], lr, reg)


def fit_funk_svd(train: InteractionMatrix, cfg: SgdConfig = SgdConfig()) -> LatentModel:
    """SGD matrix factorization over the observed positives, no biases.

    Every epoch visits all positives in a freshly shuffled order drawn
    from the seed-determined generator; results are bitwise reproducible
    for a fixed seed.
    """
    user_f, item_f, rng = initial_factors(train.n_rows, train.n_cols, cfg.factors, cfg.seed)
    users = train.row_ids().astype(np.int64)
    items = train.col_indices.astype(np.int64)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(users))
        if len(users):
            _sgd_epoch(user_f, item_f, users, items, order, cfg.learning_rate, cfg.reg)
        if not (np.all(np.isfinite(user_f)) and np.all(np.isfinite(item_f))):
            raise NumericalError(
                f"factors diverged in epoch {epoch}; lower learning_rate (currently "
                f"{cfg.learning_rate})"
            )
    return LatentModel(user_f, item_f)


def score_latent(
    model: LatentModel,
    train: InteractionMatrix,
    user: int,
    k: int,
    filter_seen: bool = True,
    popularity: np.ndarray | None = None,
) -> np.ndarray:
    """Top-k items by user-factor x item-factor dot products; filtering,
    tie-breaking and padding follow the item-model scoring rules."""
    if not 0 <= user < model.user_factors.shape[0]:
        raise IndexError(f"user {user} out of bounds")
    scores = model.item_factors @ model.user_factors[user]
    hist, _ = train.row(user)
    if popularity is None:
        popularity = popularity_ranking(train)
    return rank_items(scores, hist, k, popularity, filter_seen)
