"""Top-K ranking metrics, holdout evaluation and user-group analysis.

All metrics use binary relevance.  Users with empty held-out sets are
excluded from every mean; aggregation across splits is the unweighted
mean of per-split means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import EvalSplit
from .ranking import popularity_ranking
from .sparse import InteractionMatrix

DEFAULT_METRICS = ("precision", "recall", "ndcg", "map")


def _as_set(relevant) -> set:
    if isinstance(relevant, (set, frozenset)):
        return set(relevant)
    return {int(x) for x in np.asarray(relevant).ravel()}


def precision_at_k(ranked, relevant, k: int) -> float:
    """Fraction of the top-k that is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = _as_set(relevant)
    hits = sum(1 for item in list(ranked)[:k] if int(item) in rel)
    return hits / k


def recall_at_k(ranked, relevant, k: int) -> float:
    """Fraction of the relevant set found in the top-k."""
    rel = _as_set(relevant)
    if not rel:
        raise ValueError("recall needs a nonempty relevant set")
    hits = sum(1 for item in list(ranked)[:k] if int(item) in rel)
    return hits / len(rel)


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-relevance NDCG with the log2(position + 1) discount."""
    rel = _as_set(relevant)
    if not rel:
        raise ValueError("ndcg needs a nonempty relevant set")
    dcg = 0.0
    for pos, item in enumerate(list(ranked)[:k], start=1):
        if int(item) in rel:
            dcg += 1.0 / math.log2(pos + 1)
    ideal = sum(1.0 / math.log2(p + 1) for p in range(1, min(len(rel), k) + 1))
    return dcg / ideal


def map_at_k(ranked, relevant, k: int) -> float:
    """Average precision at k for one user, normalized by min(|rel|, k)."""
    rel = _as_set(relevant)
    if not rel:
        raise ValueError("average precision needs a nonempty relevant set")
    hits = 0
    total = 0.0
    for pos, item in enumerate(list(ranked)[:k], start=1):
        if int(item) in rel:
            hits += 1
            total += hits / pos
    return total / min(len(rel), k)


_METRIC_FNS = {
    "precision": precision_at_k,
    "recall": recall_at_k,
    "ndcg": ndcg_at_k,
    "map": map_at_k,
}


@dataclass
class MetricsReport:
    """Mean metric values per (metric, k), plus run context.

    ``per_split`` carries the individual split means when the report
    aggregates several seeds; timing fields are filled by the bench
    harness, not by evaluation.
    """

    model: str
    config: dict
    metrics: dict
    n_users: int
    seed: int | None = None
    per_split: list = field(default_factory=list)
    group_map: list | None = None
    group_k: int | None = None
    fit_seconds: float | None = None
    latency_ms_per_1k: float | None = None

    def __post_init__(self):
        for name, by_k in self.metrics.items():
            for k, v in by_k.items():
                if not 0.0 <= v <= 1.0 + 1e-12:
                    raise ValueError(f"{name}@{k} = {v} outside [0, 1]")

    def value(self, metric: str, k: int) -> float:
        return self.metrics[metric][k]

    def to_json(self) -> str:
        payload = {
            "model": self.model,
            "config": self.config,
            "metrics": {m: {str(k): v for k, v in by_k.items()} for m, by_k in self.metrics.items()},
            "n_users": self.n_users,
            "seed": self.seed,
            "per_split": self.per_split,
            "group_map": self.group_map,
            "group_k": self.group_k,
            "fit_seconds": self.fit_seconds,
            "latency_ms_per_1k": self.latency_ms_per_1k,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        raw = json.loads(text)
        return cls(
            model=raw["model"],
            config=raw["config"],
            metrics={m: {int(k): v for k, v in by_k.items()} for m, by_k in raw["metrics"].items()},
            n_users=raw["n_users"],
            seed=raw.get("seed"),
            per_split=raw.get("per_split") or [],
            group_map=raw.get("group_map"),
            group_k=raw.get("group_k"),
            fit_seconds=raw.get("fit_seconds"),
            latency_ms_per_1k=raw.get("latency_ms_per_1k"),
        )

    def csv_rows(self) -> list:
        """Flat rows "model,seed,metric,k,value"."""
        seed = "" if self.seed is None else self.seed
        rows = []
        for metric in sorted(self.metrics):
            for k in sorted(self.metrics[metric]):
                rows.append(f"{self.model},{seed},{metric},{k},{self.metrics[metric][k]:.10g}")
        return rows


def _ranked_lists(model, split: EvalSplit, users: np.ndarray, k: int, popularity: np.ndarray):
    batch = getattr(model, "recommend_batch", None)
    if batch is not None:
        return batch(split.train, users, k, filter_seen=True, popularity=popularity)
    return [
        model.recommend(split.train, int(u), k, filter_seen=True, popularity=popularity)
        for u in users
    ]


def _check_dimensions(model, split: EvalSplit) -> None:
    n_items = getattr(model, "n_items", None)
    if n_items is not None and n_items != split.train.n_cols:
        raise ValueError(
            f"model covers {n_items} items but the split has {split.train.n_cols}"
        )
    n_users = getattr(model, "n_users", None)
    if n_users is not None and n_users != split.train.n_rows:
        raise ValueError(
            f"model covers {n_users} users but the split has {split.train.n_rows}"
        )


def evaluate_model(
    model,
    split: EvalSplit,
    ks,
    metrics=DEFAULT_METRICS,
) -> MetricsReport:
    """Mean ranking metrics over all users with held-out items.

    The model is scored once per user at max(ks) with seen-item
    filtering; smaller cutoffs reuse prefixes of the same ranking.
    """
    ks = sorted(int(k) for k in ks)
    if not ks:
        raise ValueError("need at least one cutoff")
    unknown = set(metrics) - set(_METRIC_FNS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    _check_dimensions(model, split)
    users = split.evaluated_users()
    popularity = popularity_ranking(split.train)
    ranked_all = _ranked_lists(model, split, users, max(ks), popularity)
    per_user = {m: {k: np.zeros(len(users)) for k in ks} for m in metrics}
    for idx, u in enumerate(users):
        relevant = _as_set(split.test_items(int(u)))
        ranked = ranked_all[idx]
        for m in metrics:
            fn = _METRIC_FNS[m]
            for k in ks:
                per_user[m][k][idx] = fn(ranked, relevant, k)
    means = {
        m: {k: (float(np.mean(per_user[m][k])) if len(users) else 0.0) for k in ks}
        for m in metrics
    }
    return MetricsReport(
        model=getattr(model, "kind", type(model).__name__),
        config=dict(getattr(model, "config", {})),
        metrics=means,
        n_users=len(users),
        seed=split.seed,
    )


def aggregate_reports(reports) -> MetricsReport:
    """Unweighted mean of per-split means, keeping each split's values."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    kinds = {r.model for r in reports}
    if len(kinds) != 1:
        raise ValueError(f"refusing to aggregate different models: {sorted(kinds)}")
    metrics = {}
    for m in reports[0].metrics:
        metrics[m] = {
            k: float(np.mean([r.metrics[m][k] for r in reports]))
            for k in reports[0].metrics[m]
        }
    per_split = [
        {"seed": r.seed, "n_users": r.n_users,
         "metrics": {m: {str(k): v for k, v in by_k.items()} for m, by_k in r.metrics.items()}}
        for r in reports
    ]
    return MetricsReport(
        model=reports[0].model,
        config=reports[0].config,
        metrics=metrics,
        n_users=int(np.mean([r.n_users for r in reports])),
        per_split=per_split,
    )


@dataclass(frozen=True)
class GroupAssignment:
    """Users partitioned into contiguous profile-size groups.

    ``group_of[u]`` is the group of user u; group 0 holds the smallest
    training profiles and sizes differ by at most one.
    """

    group_of: np.ndarray
    n_groups: int


def group_users_by_profile(train: InteractionMatrix, n_groups: int = 10) -> GroupAssignment:
    """Sort users by training-profile size (ties by index) and cut into
    n_groups nearly equal blocks; the first (n mod g) blocks take the
    extra user."""
    n_users = train.n_rows
    if not 1 <= n_groups <= max(n_users, 1):
        raise ValueError("n_groups must be in [1, n_users]")
    sizes = np.diff(train.row_offsets)
    order = np.lexsort((np.arange(n_users), sizes))
    base, extra = divmod(n_users, n_groups)
    group_of = np.zeros(n_users, dtype=np.int32)
    start = 0
    for g in range(n_groups):
        length = base + (1 if g < extra else 0)
        group_of[order[start:start + length]] = g
        start += length
    return GroupAssignment(group_of=group_of, n_groups=n_groups)


def map_per_group(model, split: EvalSplit, groups: GroupAssignment, k: int):
    """Mean AP@k within each user group; empty groups yield None."""
    _check_dimensions(model, split)
    users = split.evaluated_users()
    popularity = popularity_ranking(split.train)
    ranked_all = _ranked_lists(model, split, users, k, popularity)
    sums = np.zeros(groups.n_groups)
    counts = np.zeros(groups.n_groups, dtype=np.int64)
    for idx, u in enumerate(users):
        g = int(groups.group_of[int(u)])
        sums[g] += map_at_k(ranked_all[idx], split.test_items(int(u)), k)
        counts[g] += 1
    return [
        (float(sums[g] / counts[g]) if counts[g] else None)
        for g in range(groups.n_groups)
    ]
