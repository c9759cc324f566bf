"""Seeded synthetic interaction data for desk-scale stress runs.

The clustered generator plants co-consumption structure (users mostly
interact inside their own item cluster) so collaborative models have
signal to find, while activity skew keeps popularity a meaningful
baseline.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset


def clustered_interactions(
    n_users: int,
    n_items: int,
    n_interactions: int,
    n_clusters: int = 10,
    in_cluster_prob: float = 0.85,
    rating: float = 5.0,
    seed: int = 0,
) -> Dataset:
    """Dataset with planted item-cluster structure.

    Each user belongs to one cluster and draws items mostly from it;
    user activity follows a mild power law.  Exactly ``n_interactions``
    distinct (user, item) pairs are produced.
    """
    if n_clusters < 1 or n_clusters > n_items:
        raise ValueError("n_clusters must be in [1, n_items]")
    if n_interactions > n_users * n_items:
        raise ValueError("more interactions requested than cells available")
    rng = np.random.default_rng(seed)
    user_cluster = rng.integers(0, n_clusters, size=n_users)
    # item i sits in cluster i mod K, so cluster c holds {c, c+K, c+2K, ...}
    pool_sizes = np.array(
        [(n_items - c + n_clusters - 1) // n_clusters for c in range(n_clusters)]
    )

    weights = rng.pareto(2.5, size=n_users) + 1.0
    weights /= weights.sum()
    pairs = set()
    users, items = [], []
    attempts = 0
    while len(pairs) < n_interactions:
        attempts += 1
        if attempts > 200:
            raise RuntimeError("interaction space too dense for the requested count")
        batch = max(2 * (n_interactions - len(pairs)), 1024)
        us = rng.choice(n_users, size=batch, p=weights)
        cl = user_cluster[us]
        within = rng.random(batch) < in_cluster_prob
        slots = rng.integers(0, pool_sizes[cl])
        iis = np.where(within, cl + slots * n_clusters, rng.integers(0, n_items, size=batch))
        for u, i in zip(us.tolist(), iis.tolist()):
            if (u, i) in pairs:
                continue
            pairs.add((u, i))
            users.append(u)
            items.append(i)
            if len(pairs) == n_interactions:
                break

    users = np.asarray(users, dtype=np.int32)
    items = np.asarray(items, dtype=np.int32)
    order = np.lexsort((items, users))
    n = len(users)
    return Dataset(
        users[order], items[order],
        np.full(n, rating, dtype=np.float64),
        np.arange(n, dtype=np.int64),
        tuple(f"u{u}" for u in range(n_users)),
        tuple(f"i{i}" for i in range(n_items)),
    )
