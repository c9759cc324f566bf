"""Item-item linear models: closed-form ridge autoencoder and sparse
linear models fit by per-column coordinate descent.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

from .parallel import worker_count
from .ranking import popularity_ranking, rank_items
from .sparse import (
    InteractionMatrix,
    NumericalError,
    SparseWeights,
    dense_to_weights,
    from_scipy,
    as_weights,
)

WEIGHT_DROP_THRESHOLD = 1e-12


@dataclass(frozen=True)
class EaseConfig:
    """Closed-form item-autoencoder settings.

    ``max_items`` caps the dense Gram matrix; larger catalogs should be
    subsampled first.
    """

    lam: float = 0.5
    max_items: int = 50_000

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0 (the Gram matrix may be singular otherwise)")
        if self.max_items < 1:
            raise ValueError("max_items must be >= 1")


@dataclass(frozen=True)
class SlimConfig:
    """Per-column ElasticNet settings.

    ``alpha`` is the overall regularization strength; ``l1_ratio``
    splits it between the L1 and L2 terms (1.0 = pure Lasso).
    """

    alpha: float = 1e-4
    l1_ratio: float = 1.0
    max_iters: int = 100
    tol: float = 1e-4
    nonnegative: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError("l1_ratio must be in [0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass
class SlimFitStats:
    """Coordinate-descent diagnostics: sweeps used per column and,
    optionally, the per-sweep objective path of each column."""

    sweeps: np.ndarray
    objectives: list | None = None


def fit_ease(train: InteractionMatrix, cfg: EaseConfig = EaseConfig()) -> SparseWeights:
    """Closed-form item weights from the inverse regularized Gram matrix.

    Computes P = (X^T X + lam*I)^-1 and sets W[i, j] = -P[i, j] / P[j, j]
    off the diagonal.  Entries below 1e-12 in magnitude are dropped.
    """
    n_items = train.n_cols
    if n_items < 1:
        raise ValueError("need at least one item")
    if n_items > cfg.max_items:
        raise ValueError(
            f"{n_items} items exceed the dense Gram cap ({cfg.max_items}); "
            "subsample the dataset or raise max_items"
        )
    x = train.to_scipy()
    gram = np.asarray((x.T @ x).todense(), dtype=np.float64)
    gram[np.diag_indices(n_items)] += cfg.lam
    try:
        p = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"gram matrix numerically singular (cond ~ {np.linalg.cond(gram):.3e})"
        ) from None
    if not np.all(np.isfinite(p)):
        raise NumericalError(
            f"gram inverse overflowed (cond ~ {np.linalg.cond(gram):.3e})"
        )
    weights = -p / np.diag(p)[None, :]
    np.fill_diagonal(weights, 0.0)
    return dense_to_weights(weights, drop_below=WEIGHT_DROP_THRESHOLD)


@njit(cache=True, nogil=True)
def _cd_column(indptr, indices, data, diag, j, l1, l2, max_iters, tol, nonneg,
               record_obj, obj_out):  # pragma: no cover - compiled
    """Cyclic coordinate descent for one target column.

    Works entirely on the Gram matrix G = X^T X: the target correlations
    are G's row j and the quadratic form is tracked through q = G w.
    Returns (w, sweeps).
    """
    n = len(diag)
    w = np.zeros(n)
    q = np.zeros(n)
    c = np.zeros(n)
    for p in range(indptr[j], indptr[j + 1]):
        c[indices[p]] = data[p]
    sweeps = 0
    for it in range(max_iters):
        max_delta = 0.0
        for i in range(n):
            if i == j:
                continue
            denom = diag[i] + l2
            if denom <= 0.0:
                continue
            rho = c[i] - q[i] + diag[i] * w[i]
            if nonneg:
                wn = rho - l1
                if wn < 0.0:
                    wn = 0.0
            else:
                if rho > l1:
                    wn = rho - l1
                elif rho < -l1:
                    wn = rho + l1
                else:
                    wn = 0.0
            wn /= denom
            delta = wn - w[i]
            if delta != 0.0:
                for p in range(indptr[i], indptr[i + 1]):
                    q[indices[p]] += delta * data[p]
                w[i] = wn
                ad = abs(delta)
                if ad > max_delta:
                    max_delta = ad
        sweeps = it + 1
        if record_obj:
            cw = 0.0
            wq = 0.0
            l1n = 0.0
            l2n = 0.0
            for i in range(n):
                cw += c[i] * w[i]
                wq += w[i] * q[i]
                l1n += abs(w[i])
                l2n += w[i] * w[i]
            obj_out[it] = 0.5 * (diag[j] - 2.0 * cw + wq) + l1 * l1n + 0.5 * l2 * l2n
        if max_delta < tol:
            break
    return w, sweeps


def slim_objective(train: InteractionMatrix, j: int, w: np.ndarray, cfg: SlimConfig) -> float:
    """ElasticNet objective of column j for coefficient vector w."""
    x = train.to_scipy()
    resid = np.asarray(x[:, j].todense()).ravel() - x @ w
    l1 = cfg.alpha * cfg.l1_ratio
    l2 = cfg.alpha * (1.0 - cfg.l1_ratio)
    return float(
        0.5 * np.dot(resid, resid) + l1 * np.abs(w).sum() + 0.5 * l2 * np.dot(w, w)
    )


def fit_slim(
    train: InteractionMatrix,
    cfg: SlimConfig = SlimConfig(),
    *,
    return_stats: bool = False,
    record_objectives: bool = False,
):
    """Item weights by per-column coordinate descent.

    Each column j solves min_w 0.5*||x_j - X w||^2 + alpha*l1_ratio*|w|_1
    + 0.5*alpha*(1 - l1_ratio)*|w|^2 with w_j fixed to zero (and w >= 0
    when the nonnegative flag is set).  A column stops after max_iters
    sweeps or once the largest coefficient change in a sweep drops below
    tol; non-convergence is recorded, not raised.
    """
    n_items = train.n_cols
    x = train.to_scipy()
    gram = (x.T @ x).tocsr()
    gram.sort_indices()
    indptr = gram.indptr.astype(np.int64)
    indices = gram.indices.astype(np.int64)
    gdata = gram.data.astype(np.float64)
    diag = np.asarray(gram.diagonal(), dtype=np.float64)
    l1 = cfg.alpha * cfg.l1_ratio
    l2 = cfg.alpha * (1.0 - cfg.l1_ratio)

    sweeps = np.zeros(n_items, dtype=np.int64)
    objectives = [None] * n_items if record_objectives else None
    col_results = [None] * n_items

    def solve_column(j):
        obj_buf = np.zeros(cfg.max_iters if record_objectives else 1, dtype=np.float64)
        w, used = _cd_column(
            indptr, indices, gdata, diag, j, l1, l2,
            cfg.max_iters, cfg.tol, cfg.nonnegative,
            record_objectives, obj_buf,
        )
        sweeps[j] = used
        if record_objectives:
            objectives[j] = obj_buf[:used].copy()
        nz = np.flatnonzero(np.abs(w) >= WEIGHT_DROP_THRESHOLD)
        col_results[j] = (nz, w[nz])

    workers = worker_count()
    if workers > 1 and n_items > 1:
        # columns are independent subproblems; results land in
        # per-column slots, so the output is worker-count invariant
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_column, range(n_items)))
    else:
        for j in range(n_items):
            solve_column(j)

    cols_out, rows_out, vals_out = [], [], []
    for j, (nz, vals) in enumerate(col_results):
        if len(nz):
            rows_out.append(nz)
            cols_out.append(np.full(len(nz), j, dtype=np.int64))
            vals_out.append(vals)

    if rows_out:
        coo = sp.coo_matrix(
            (np.concatenate(vals_out), (np.concatenate(rows_out), np.concatenate(cols_out))),
            shape=(n_items, n_items),
        )
        weights = as_weights(from_scipy(coo))
    else:
        weights = as_weights(from_scipy(sp.csr_matrix((n_items, n_items))))
    if return_stats:
        return weights, SlimFitStats(sweeps=sweeps, objectives=objectives)
    return weights


def score_item_model(
    model: SparseWeights,
    train: InteractionMatrix,
    user: int,
    k: int,
    filter_seen: bool = True,
    popularity: np.ndarray | None = None,
) -> np.ndarray:
    """Top-k items for one user: score = user history row times weights."""
    if not 0 <= user < train.n_rows:
        raise IndexError(f"user {user} out of bounds for {train.n_rows} users")
    hist, vals = train.row(user)
    scores = item_scores_from_history(model, hist, vals)
    if popularity is None:
        popularity = popularity_ranking(train)
    return rank_items(scores, hist, k, popularity, filter_seen)


def item_scores_from_history(
    model: SparseWeights, history: np.ndarray, weights: np.ndarray | None = None
) -> np.ndarray:
    """Dense score vector for an explicit interaction history."""
    scores = np.zeros(model.n_cols, dtype=np.float64)
    vals = model.value_array()
    if weights is None:
        weights = np.ones(len(history), dtype=np.float64)
    for i, wv in zip(history, weights):
        lo, hi = int(model.row_offsets[i]), int(model.row_offsets[i + 1])
        scores[model.col_indices[lo:hi]] += wv * vals[lo:hi]
    return scores
