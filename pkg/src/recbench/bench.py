"""Big-Data constraint harness: training time, peak memory, batch
latency, scalability sweeps, cold-start and incremental-update checks.

Fits under measurement run one at a time; only the resident-memory
sampler shares the process while a fit is being timed.
"""

from __future__ import annotations

import math
import statistics
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import psutil

from .data import Dataset, EvalSplit, binarize, interaction_matrix, kcore_filter, subsample
from .data import _sorted_csr
from .evaluation import DEFAULT_METRICS, MetricsReport, evaluate_model
from .models import ItemModelRecommender, LatentRecommender, ModelSpec, PopularityRecommender, fit_model
from .ranking import popularity_ranking

MEMORY_SAMPLE_SECONDS = 0.05


@dataclass
class BenchRecord:
    """One measurement row; medians for time, high-water for memory."""

    model: str
    config: dict
    size: int
    fit_seconds: float | None = None
    peak_rss_bytes: int | None = None
    latency_ms_per_1k: float | None = None
    latency_mean_ms: float | None = None
    repetitions: int = 1
    notes: str = ""

    def __post_init__(self):
        for name in ("fit_seconds", "peak_rss_bytes", "latency_ms_per_1k", "latency_mean_ms"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def csv_row(self) -> str:
        def fmt(v, spec=".6g"):
            return "" if v is None else format(v, spec)

        return (
            f"{self.model},{self.size},{fmt(self.fit_seconds)},"
            f"{fmt(self.peak_rss_bytes, 'd')},{fmt(self.latency_ms_per_1k)},{self.repetitions}"
        )


BENCH_CSV_HEADER = "model,size,fit_seconds,peak_bytes,latency_ms_per_1k,reps"


class MemoryMonitor:
    """Samples process RSS on a timer thread; start before the fit,
    stop after, read the high-water mark."""

    def __init__(self, interval: float = MEMORY_SAMPLE_SECONDS):
        self.interval = interval
        self.peak = 0
        self.samples = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._proc = psutil.Process()

    def _sample(self):
        rss = self._proc.memory_info().rss
        if rss > self.peak:
            self.peak = rss
        self.samples += 1

    def _run(self):
        while not self._stop.is_set():
            self._sample()
            self._stop.wait(self.interval)

    def __enter__(self):
        self._sample()
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()
        self._sample()
        return False


def measure_training(spec: ModelSpec, train, repetitions: int = 3):
    """Median wall-clock fit time and sampled peak RSS over repetitions."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    times = []
    peak = 0
    model = None
    for _ in range(repetitions):
        with MemoryMonitor() as mon:
            t0 = time.perf_counter()
            model = fit_model(spec, train)
            times.append(time.perf_counter() - t0)
        peak = max(peak, mon.peak)
    record = BenchRecord(
        model=spec.kind,
        config=model.config,
        size=train.nnz,
        fit_seconds=float(statistics.median(times)),
        peak_rss_bytes=int(peak),
        repetitions=repetitions,
        notes=f"times={['%.4f' % t for t in times]}",
    )
    return record, model


def measure_latency(model, train, batch: int = 1000, k: int = 10, seed: int = 0) -> BenchRecord:
    """Wall time to produce top-k lists for a seed-chosen user batch."""
    rng = np.random.default_rng(seed)
    replace = batch > train.n_rows
    users = rng.choice(train.n_rows, size=batch, replace=replace)
    popularity = popularity_ranking(train)
    t0 = time.perf_counter()
    model.recommend_batch(train, users, k, filter_seen=True, popularity=popularity)
    total_s = time.perf_counter() - t0
    notes = "sampled with replacement (fewer users than batch)" if replace else ""
    return BenchRecord(
        model=model.kind,
        config=model.config,
        size=train.nnz,
        latency_ms_per_1k=total_s * 1000.0 * (1000.0 / batch),
        latency_mean_ms=total_s * 1000.0 / batch,
        repetitions=1,
        notes=notes,
    )


def scalability_sweep(
    model_specs,
    d: Dataset,
    sizes=(100_000, 1_000_000, 10_000_000),
    seed: int = 0,
    min_interactions: int = 5,
    binarize_threshold: float = 4.0,
    repetitions: int = 3,
) -> list:
    """Subsample-preprocess-fit at each size; oversized targets produce
    warning records instead of measurements."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    records = []
    for size in sizes:
        if size > d.n_interactions:
            for spec in model_specs:
                records.append(BenchRecord(
                    model=spec.kind, config=dict(spec.params), size=size,
                    notes=f"skipped: dataset has only {d.n_interactions} interactions",
                ))
            continue
        ds = subsample(d, size, seed)
        ds = kcore_filter(ds, min_interactions)
        ds = binarize(ds, binarize_threshold)
        train = interaction_matrix(ds)
        for spec in model_specs:
            record, _ = measure_training(spec, train, repetitions)
            record.size = size
            record.notes = f"nnz_after_preprocess={train.nnz}; " + record.notes
            records.append(record)
    return records


def _holdout_selected(d: Dataset, selected, keep_per_user, rng) -> EvalSplit:
    """Split where selected users keep a truncated profile in train and
    test the remainder; everyone else trains on their full history."""
    keep = dict(zip(selected, keep_per_user))
    bounds = np.searchsorted(d.users, np.arange(d.n_users + 1))
    train_u, train_i, test_u, test_i = [], [], [], []
    for u in range(d.n_users):
        row = d.items[bounds[u]:bounds[u + 1]]
        if len(row) == 0:
            continue
        if u in keep:
            perm = rng.permutation(row)
            t = keep[u]
            train_i.append(perm[:t])
            train_u.append(np.full(t, u, dtype=np.int32))
            test_i.append(perm[t:])
            test_u.append(np.full(len(row) - t, u, dtype=np.int32))
        else:
            train_i.append(row)
            train_u.append(np.full(len(row), u, dtype=np.int32))

    def cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)

    train = _sorted_csr(cat(train_u), cat(train_i), None, d.n_users, d.n_items)
    test = _sorted_csr(cat(test_u), cat(test_i), None, d.n_users, d.n_items)
    return EvalSplit(train=train, test=test, seed=0)


def cold_start_eval(
    spec: ModelSpec,
    d: Dataset,
    max_profile: int = 2,
    seed: int = 0,
    user_fraction: float = 0.1,
    ks=(10,),
) -> MetricsReport:
    """Truncate a random slice of users to a minimal training profile
    and report metrics over those users only.

    A selected user with n interactions keeps min(max_profile, n - 1)
    in train so at least one held-out item always exists.
    """
    if max_profile < 1:
        raise ValueError("max_profile must be >= 1")
    if not d.is_binary():
        raise ValueError("cold_start_eval requires a binarized dataset")
    rng = np.random.default_rng(seed)
    counts = np.bincount(d.users, minlength=d.n_users)
    eligible = np.flatnonzero(counts >= 2)
    if len(eligible) == 0:
        raise ValueError("no user has enough interactions to truncate")
    n_cold = max(1, round(user_fraction * d.n_users))
    n_cold = min(n_cold, len(eligible))
    selected = np.sort(rng.choice(eligible, size=n_cold, replace=False))
    keep = [min(max_profile, int(counts[u]) - 1) for u in selected]
    split = _holdout_selected(d, selected.tolist(), keep, rng)
    model = fit_model(spec, split.train)
    return evaluate_model(model, split, ks)


@dataclass(frozen=True)
class Capability:
    supports_user_fold_in: bool
    supports_new_user_scoring_without_refit: bool
    requires_full_refit_for_new_items: bool = True


CAPABILITIES = {
    "ease-r": Capability(False, True),
    "slim": Capability(False, True),
    "slim-enet": Capability(False, True),
    "als": Capability(True, False),
    "funk-svd": Capability(False, False),
    "p3alpha": Capability(False, True),
    "rp3beta": Capability(False, True),
    "top-pop": Capability(False, True),
}


def supports_incremental(kind: str) -> bool:
    cap = CAPABILITIES[kind]
    return cap.supports_user_fold_in or cap.supports_new_user_scoring_without_refit


@dataclass
class IncrementalUpdateResult:
    supported: bool
    record: BenchRecord
    incremental: MetricsReport | None = None
    retrain: MetricsReport | None = None
    deltas: dict = field(default_factory=dict)
    incorporation_seconds: float | None = None
    retrain_seconds: float | None = None


def _rank_new_users(model, spec, histories, k, popularity):
    """Recommendations for users absent from training, via fold-in or
    direct scoring depending on the model family."""
    if isinstance(model, LatentRecommender):
        gram = model.latent.item_factors.T @ model.latent.item_factors
        return [
            model.fold_in(h, k, popularity, gram=gram) for h in histories
        ]
    if isinstance(model, (ItemModelRecommender, PopularityRecommender)):
        return [model.recommend_from_history(h, k, popularity) for h in histories]
    raise TypeError(f"no incremental path for {type(model).__name__}")


def incremental_update_eval(
    spec: ModelSpec,
    d: Dataset,
    holdout_users_fraction: float = 0.05,
    seed: int = 0,
    k: int = 10,
    train_ratio: float = 0.8,
) -> IncrementalUpdateResult:
    """Compare folding new users into a fitted model against a full
    retrain that includes them.

    Held-out users' interactions split into a profile (scored from) and
    test items (evaluated); the result carries both metric sets and
    their deltas (retrain minus incremental).
    """
    if not d.is_binary():
        raise ValueError("incremental_update_eval requires a binarized dataset")
    if not supports_incremental(spec.kind):
        return IncrementalUpdateResult(
            supported=False,
            record=BenchRecord(
                model=spec.kind, config=dict(spec.params), size=d.n_interactions,
                notes="not supported: no fold-in or refit-free scoring path",
            ),
        )
    rng = np.random.default_rng(seed)
    counts = np.bincount(d.users, minlength=d.n_users)
    eligible = np.flatnonzero(counts >= 2)
    n_held = max(1, round(holdout_users_fraction * d.n_users))
    n_held = min(n_held, len(eligible))
    held = np.sort(rng.choice(eligible, size=n_held, replace=False))
    held_set = set(held.tolist())

    bounds = np.searchsorted(d.users, np.arange(d.n_users + 1))
    base_u, base_i = [], []
    profiles, tests = {}, {}
    for u in range(d.n_users):
        row = d.items[bounds[u]:bounds[u + 1]]
        if len(row) == 0:
            continue
        if u in held_set:
            perm = rng.permutation(row)
            n_train = max(1, math.floor(len(row) * train_ratio))
            profiles[u] = perm[:n_train]
            tests[u] = np.sort(perm[n_train:])
        else:
            base_u.append(np.full(len(row), u, dtype=np.int32))
            base_i.append(row)

    def cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)

    base_train = _sorted_csr(cat(base_u), cat(base_i), None, d.n_users, d.n_items)
    base_model = fit_model(spec, base_train)
    popularity = popularity_ranking(base_train)
    held_eval = [u for u in held.tolist() if len(tests[u])]
    histories = [profiles[u] for u in held_eval]

    t0 = time.perf_counter()
    inc_ranked = _rank_new_users(base_model, spec, histories, k, popularity)
    incorporation_s = time.perf_counter() - t0

    full_u = base_u + [np.full(len(profiles[u]), u, dtype=np.int32) for u in sorted(profiles)]
    full_i = base_i + [profiles[u] for u in sorted(profiles)]
    full_train = _sorted_csr(cat(full_u), cat(full_i), None, d.n_users, d.n_items)
    t0 = time.perf_counter()
    full_model = fit_model(spec, full_train)
    retrain_s = time.perf_counter() - t0
    full_pop = popularity_ranking(full_train)
    full_ranked = full_model.recommend_batch(
        full_train, np.asarray(held_eval), k, filter_seen=True, popularity=full_pop
    )

    inc_report = _report_from_rankings(spec, inc_ranked, held_eval, tests, k, d)
    full_report = _report_from_rankings(spec, full_ranked, held_eval, tests, k, d)
    deltas = {
        m: full_report.metrics[m][k] - inc_report.metrics[m][k] for m in DEFAULT_METRICS
    }
    record = BenchRecord(
        model=spec.kind,
        config=base_model.config,
        size=full_train.nnz,
        fit_seconds=retrain_s,
        repetitions=1,
        notes=f"incorporation_seconds={incorporation_s:.6f}; held_users={len(held_eval)}",
    )
    return IncrementalUpdateResult(
        supported=True,
        record=record,
        incremental=inc_report,
        retrain=full_report,
        deltas=deltas,
        incorporation_seconds=incorporation_s,
        retrain_seconds=retrain_s,
    )


def _report_from_rankings(spec, ranked_lists, users, tests, k, d) -> MetricsReport:
    from .evaluation import map_at_k, ndcg_at_k, precision_at_k, recall_at_k

    fns = {"precision": precision_at_k, "recall": recall_at_k, "ndcg": ndcg_at_k, "map": map_at_k}
    means = {}
    for name, fn in fns.items():
        vals = [fn(r, tests[u], k) for r, u in zip(ranked_lists, users)]
        means[name] = {k: float(np.mean(vals)) if vals else 0.0}
    return MetricsReport(
        model=spec.kind, config=dict(spec.params), metrics=means, n_users=len(users),
    )
