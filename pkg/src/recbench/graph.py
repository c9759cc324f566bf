"""Training-free random-walk recommenders and the popularity baseline.

Both walk models score item pairs by two-step transition mass on the
user-item bipartite graph; the beta variant additionally divides each
column by the target item's popularity raised to beta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .ranking import popularity_ranking
from .sparse import (
    InteractionMatrix,
    SparseWeights,
    as_weights,
    from_scipy,
    topk_truncate,
    zero_diagonal,
)


@dataclass(frozen=True)
class WalkConfig:
    alpha: float = 0.6
    beta: float = 0.4
    topk: int = 100

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.topk < 1:
            raise ValueError("topk must be >= 1")


def _row_normalized(mat: sp.csr_matrix, alpha: float) -> sp.csr_matrix:
    out = mat.astype(np.float64).tocsr(copy=True)
    sums = np.asarray(out.sum(axis=1)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    out.data *= np.repeat(scale, np.diff(out.indptr))
    if alpha != 1.0:
        out.data **= alpha
    return out


def walk_product(train: InteractionMatrix, alpha: float) -> InteractionMatrix:
    """Untruncated two-step item-item walk matrix, diagonal intact.

    Row-normalizes the item-to-user and user-to-item transition
    matrices, raises every entry to ``alpha`` elementwise and multiplies
    them.  With alpha=1 each nonempty row sums to one.
    """
    x = train.to_scipy()
    x.data[:] = 1.0  # walks ignore interaction weights
    t_iu = _row_normalized(x.T.tocsr(), alpha)
    t_ui = _row_normalized(x, alpha)
    return from_scipy((t_iu @ t_ui).tocsr())


def fit_p3alpha(train: InteractionMatrix, cfg: WalkConfig = WalkConfig()) -> SparseWeights:
    """Two-step walk weights; beta is forced to zero for this variant."""
    if train.nnz == 0:
        raise ValueError("walk models need a nonempty training matrix")
    cfg = replace(cfg, beta=0.0)
    w = zero_diagonal(walk_product(train, cfg.alpha))
    return as_weights(topk_truncate(w, cfg.topk))


def fit_rp3beta(train: InteractionMatrix, cfg: WalkConfig = WalkConfig()) -> SparseWeights:
    """Walk weights with target-popularity penalization.

    Column j of the untruncated walk product is divided by pop(j)^beta
    before the diagonal is removed and rows are truncated.
    """
    if train.nnz == 0:
        raise ValueError("walk models need a nonempty training matrix")
    w = walk_product(train, cfg.alpha)
    if cfg.beta != 0.0:
        pops = np.bincount(train.col_indices, minlength=train.n_cols).astype(np.float64)
        scale = np.divide(
            1.0, pops**cfg.beta, out=np.zeros_like(pops), where=pops > 0
        )
        values = w.value_array() * scale[w.col_indices]
        w = InteractionMatrix(w.n_rows, w.n_cols, w.row_offsets, w.col_indices, values)
    return as_weights(topk_truncate(zero_diagonal(w), cfg.topk))


def fit_top_popular(train: InteractionMatrix) -> np.ndarray:
    """Items by descending interaction count; the padding source and
    the sanity-floor baseline."""
    return popularity_ranking(train)
