"""Shared top-k ranking rules: score ordering, seen-item filtering and
popularity padding.

Every recommender produces a dense score vector and funnels it through
``rank_items`` so tie-breaking (lower item index first) and padding
behave identically across model families.
"""

from __future__ import annotations

import numpy as np

from .sparse import InteractionMatrix


def popularity_ranking(train: InteractionMatrix) -> np.ndarray:
    """Items by descending training-interaction count, ties by lower index.

    The result is a permutation of all item indices and doubles as the
    popularity-baseline model.
    """
    pops = np.bincount(train.col_indices, minlength=train.n_cols)
    return np.lexsort((np.arange(train.n_cols), -pops)).astype(np.int64)


def rank_items(
    scores: np.ndarray,
    seen: np.ndarray,
    k: int,
    popularity: np.ndarray,
    filter_seen: bool = True,
) -> np.ndarray:
    """Top-k item list from a score vector.

    Items with nonzero score are ranked by descending score (ties to the
    lower index); zero-scored items are appended in global popularity
    order until the list reaches k.  Seen items never appear when
    ``filter_seen`` is set.  Shorter lists occur only when fewer than k
    items are eligible at all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n_items = len(scores)
    blocked = np.zeros(n_items, dtype=bool)
    if filter_seen and len(seen):
        blocked[seen] = True
    cand = np.flatnonzero((scores != 0.0) & ~blocked)
    ranked = cand[np.argsort(-scores[cand], kind="stable")][:k]
    if len(ranked) >= k:
        return ranked[:k]
    taken = blocked
    taken[ranked] = True
    pad = popularity[~taken[popularity]][: k - len(ranked)]
    return np.concatenate([ranked, pad])
