"""Rating-file ingestion, preprocessing and holdout splitting.

Pipeline order is parse -> remap -> k-core filter -> binarize -> split.
Datasets keep their interactions in canonical (user, item) order so
that every seeded downstream operation depends only on the interaction
set, not on raw file order.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .sparse import InteractionMatrix, read_matrix, write_matrix

FORMATS = ("movielens-csv", "tsv-quad", "netflix-dir")
_ML_HEADER = "userId,movieId,rating,timestamp"


class DataFormatError(ValueError):
    """Raised for malformed input files (reported with line numbers)."""


@dataclass(frozen=True)
class Dataset:
    """Deduplicated interactions over dense, contiguous user/item indices.

    Interactions are parallel arrays sorted by (user, item); external
    IDs are recoverable through ``user_ids`` / ``item_ids`` (dense index
    -> external ID, in first-appearance order).
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    user_ids: tuple
    item_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "users", np.asarray(self.users, dtype=np.int32))
        object.__setattr__(self, "items", np.asarray(self.items, dtype=np.int32))
        object.__setattr__(self, "ratings", np.asarray(self.ratings, dtype=np.float64))
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.int64))
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        u, i = self.users, self.items
        if len(u):
            if u.min() < 0 or u.max() >= self.n_users or i.min() < 0 or i.max() >= self.n_items:
                raise ValueError("interaction index outside the lookup tables")
            ordered = (u[:-1] < u[1:]) | ((u[:-1] == u[1:]) & (i[:-1] < i[1:]))
            if not np.all(ordered):
                raise ValueError("interactions must be sorted by (user, item) without duplicates")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return len(self.users)

    def is_binary(self) -> bool:
        return bool(np.all(self.ratings == 1.0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )


@dataclass(frozen=True)
class EvalSplit:
    """Per-user holdout: binary train matrix plus held-out item sets.

    ``test`` is a binary matrix whose row u holds user u's relevant
    (held-out) items; train and test rows are disjoint.
    """

    train: InteractionMatrix
    test: InteractionMatrix
    seed: int

    def __post_init__(self):
        if self.train.shape != self.test.shape:
            raise ValueError("train and test must share dimensions")
        for u in range(self.train.n_rows):
            tr, _ = self.train.row(u)
            te, _ = self.test.row(u)
            if len(te) and not len(tr):
                raise ValueError(f"user {u} has test items but no training history")
            if len(tr) and len(te) and np.intersect1d(tr, te).size:
                raise ValueError(f"user {u} has overlapping train/test items")

    def test_items(self, user: int) -> np.ndarray:
        cols, _ = self.test.row(user)
        return cols

    def evaluated_users(self) -> np.ndarray:
        """Users with a nonempty held-out set (the only ones averaged)."""
        return np.flatnonzero(np.diff(self.test.row_offsets) > 0)


def _parse_movielens_csv(path) -> list[tuple]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        if header != _ML_HEADER:
            raise DataFormatError(f"{path}:1: expected header {_ML_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 comma-separated fields")
            try:
                records.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return records


def _parse_tsv_quad(path) -> list[tuple]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
            try:
                records.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return records


def _parse_netflix_dir(path) -> list[tuple]:
    """Per-item files: an "ItemID:" line opens a block of "user,rating,date"."""
    records = []
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.is_file())
    for fp in files:
        item = None
        with open(fp, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.endswith(":"):
                    try:
                        item = int(line[:-1])
                    except ValueError:
                        raise DataFormatError(f"{fp}:{lineno}: bad item header {line!r}") from None
                    continue
                if item is None:
                    raise DataFormatError(f"{fp}:{lineno}: rating line before any item header")
                parts = line.split(",")
                if len(parts) != 3:
                    raise DataFormatError(f"{fp}:{lineno}: expected user,rating,date")
                try:
                    user = int(parts[0])
                    rating = float(parts[1])
                    day = datetime.strptime(parts[2], "%Y-%m-%d").replace(tzinfo=timezone.utc)
                except ValueError as exc:
                    raise DataFormatError(f"{fp}:{lineno}: {exc}") from None
                records.append((user, item, rating, int(day.timestamp())))
    return records


def parse_ratings(path, fmt: str) -> list[tuple]:
    """Read raw (external_user, external_item, rating, timestamp) records."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if fmt == "movielens-csv":
        return _parse_movielens_csv(path)
    if fmt == "tsv-quad":
        return _parse_tsv_quad(path)
    return _parse_netflix_dir(path)


def remap_ids(records) -> Dataset:
    """Assign dense indices in first-appearance order, deduplicating pairs.

    Duplicate (user, item) pairs keep the rating and timestamp of the
    last occurrence.
    """
    user_index, item_index = {}, {}
    users, items, ratings, stamps = [], [], [], []
    seen = {}
    for ext_u, ext_i, rating, ts in records:
        u = user_index.setdefault(ext_u, len(user_index))
        i = item_index.setdefault(ext_i, len(item_index))
        key = (u, i)
        if key in seen:
            pos = seen[key]
            ratings[pos] = float(rating)
            stamps[pos] = int(ts)
        else:
            seen[key] = len(users)
            users.append(u)
            items.append(i)
            ratings.append(float(rating))
            stamps.append(int(ts))
    users = np.asarray(users, dtype=np.int32)
    items = np.asarray(items, dtype=np.int32)
    ratings = np.asarray(ratings, dtype=np.float64)
    stamps = np.asarray(stamps, dtype=np.int64)
    order = np.lexsort((items, users))
    return Dataset(
        users[order], items[order], ratings[order], stamps[order],
        tuple(user_index), tuple(item_index),
    )


def _redensify(d: Dataset, keep_mask: np.ndarray) -> Dataset:
    """Restrict to masked interactions, remapping surviving indices.

    Survivors keep their relative order (ascending old index), so a
    no-op mask is the identity.
    """
    users, items = d.users[keep_mask], d.items[keep_mask]
    ratings, stamps = d.ratings[keep_mask], d.timestamps[keep_mask]
    old_users = np.unique(users)
    old_items = np.unique(items)
    user_map = np.full(d.n_users, -1, dtype=np.int32)
    item_map = np.full(d.n_items, -1, dtype=np.int32)
    user_map[old_users] = np.arange(len(old_users), dtype=np.int32)
    item_map[old_items] = np.arange(len(old_items), dtype=np.int32)
    return Dataset(
        user_map[users], item_map[items], ratings, stamps,
        tuple(d.user_ids[u] for u in old_users),
        tuple(d.item_ids[i] for i in old_items),
    )


def kcore_filter(d: Dataset, min_interactions: int = 5) -> Dataset:
    """Iteratively drop users/items below the interaction floor.

    Removal cascades: dropping a user can push items under the floor
    and vice versa, so filtering repeats until a fixpoint.
    """
    if min_interactions < 1:
        raise ValueError("min_interactions must be >= 1")
    mask = np.ones(d.n_interactions, dtype=bool)
    while True:
        uc = np.bincount(d.users[mask], minlength=d.n_users)
        ic = np.bincount(d.items[mask], minlength=d.n_items)
        keep_u = uc >= min_interactions
        keep_i = ic >= min_interactions
        new_mask = mask & keep_u[d.users] & keep_i[d.items]
        if new_mask.sum() == mask.sum():
            break
        mask = new_mask
    return _redensify(d, mask)


def binarize(d: Dataset, threshold: float = 4.0) -> Dataset:
    """Keep interactions rated at or above the threshold, with weight 1.

    Indices are left untouched (users/items may end up with empty
    profiles); lookups are unchanged.
    """
    keep = d.ratings >= threshold
    return Dataset(
        d.users[keep], d.items[keep],
        np.ones(int(keep.sum()), dtype=np.float64),
        d.timestamps[keep],
        d.user_ids, d.item_ids,
    )


def _sorted_csr(users, items, values, n_rows, n_cols) -> InteractionMatrix:
    """CSR from already-deduplicated triples (any order)."""
    order = np.lexsort((items, users))
    users, items = users[order], items[order]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(users, minlength=n_rows), out=offsets[1:])
    if values is not None:
        values = np.asarray(values, dtype=np.float64)[order]
        if np.all(values == 1.0):
            values = None
    return InteractionMatrix(n_rows, n_cols, offsets, items.astype(np.int32), values)


def interaction_matrix(d: Dataset) -> InteractionMatrix:
    """Dataset interactions as a CSR matrix (binary when ratings are all 1)."""
    return _sorted_csr(d.users, d.items, d.ratings, d.n_users, d.n_items)


def holdout_split(d: Dataset, train_ratio: float = 0.8, seed: int = 0) -> EvalSplit:
    """Randomized per-user holdout.

    Each user's items are shuffled by a PCG64 generator seeded with
    ``seed`` (users processed in ascending index order); floor(n * ratio)
    items go to train with a minimum of one, the rest to test.  Users
    left without test items keep everything in train and are excluded
    from metric averaging.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must be in (0, 1)")
    if not d.is_binary():
        raise ValueError("holdout_split requires a binarized dataset")
    rng = np.random.default_rng(seed)
    bounds = np.searchsorted(d.users, np.arange(d.n_users + 1))
    train_u, train_i, test_u, test_i = [], [], [], []
    for u in range(d.n_users):
        row = d.items[bounds[u]:bounds[u + 1]]
        if len(row) == 0:
            continue
        perm = rng.permutation(row)
        n_train = max(1, math.floor(len(row) * train_ratio))
        train_i.append(perm[:n_train])
        train_u.append(np.full(n_train, u, dtype=np.int32))
        test_i.append(perm[n_train:])
        test_u.append(np.full(len(row) - n_train, u, dtype=np.int32))

    def cat(parts, dtype):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)

    train = _sorted_csr(cat(train_u, np.int32), cat(train_i, np.int32), None,
                        d.n_users, d.n_items)
    test = _sorted_csr(cat(test_u, np.int32), cat(test_i, np.int32), None,
                       d.n_users, d.n_items)
    return EvalSplit(train=train, test=test, seed=seed)


def subsample(d: Dataset, n_interactions: int, seed: int = 0) -> Dataset:
    """Uniform sample of exactly n interactions, without replacement."""
    if n_interactions > d.n_interactions:
        raise ValueError(
            f"requested {n_interactions} interactions but only {d.n_interactions} available"
        )
    rng = np.random.default_rng(seed)
    pos = rng.choice(d.n_interactions, size=n_interactions, replace=False)
    mask = np.zeros(d.n_interactions, dtype=bool)
    mask[pos] = True
    return _redensify(d, mask)


# ---------------------------------------------------------------------------
# dataset / split artifacts

def _write_lookup(path, ids) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dense, ext in enumerate(ids):
            fh.write(f"{dense}\t{ext}\n")


def _read_lookup(path) -> tuple:
    ids = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            dense, ext = line.rstrip("\n").split("\t", 1)
            if int(dense) != lineno:
                raise DataFormatError(f"{path}:{lineno + 1}: non-contiguous dense index")
            ids.append(ext)
    return tuple(ids)


def write_dataset(d: Dataset, dirpath) -> None:
    """Persist as a matrix file plus lookup sidecars (+ timestamps)."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    write_matrix(interaction_matrix(d), dirpath / "interactions.rbm")
    stamps = _sorted_csr(d.users, d.items, d.timestamps.astype(np.float64),
                         d.n_users, d.n_items)
    write_matrix(stamps, dirpath / "timestamps.rbm")
    _write_lookup(dirpath / "users.tsv", d.user_ids)
    _write_lookup(dirpath / "items.tsv", d.item_ids)


def read_dataset(dirpath) -> Dataset:
    dirpath = Path(dirpath)
    mat = read_matrix(dirpath / "interactions.rbm")
    stamps = read_matrix(dirpath / "timestamps.rbm")
    user_ids = _read_lookup(dirpath / "users.tsv")
    item_ids = _read_lookup(dirpath / "items.tsv")
    if mat.n_rows != len(user_ids) or mat.n_cols != len(item_ids):
        raise DataFormatError(f"{dirpath}: lookup sizes disagree with matrix dimensions")
    users = mat.row_ids()
    return Dataset(
        users, mat.col_indices.copy(), mat.value_array(),
        stamps.value_array().astype(np.int64),
        user_ids, item_ids,
    )


def write_split(split: EvalSplit, dirpath) -> None:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    write_matrix(split.train, dirpath / "train.rbm")
    write_matrix(split.test, dirpath / "test.rbm")
    (dirpath / "seed.txt").write_text(f"{split.seed}\n", encoding="utf-8")


def read_split(dirpath) -> EvalSplit:
    dirpath = Path(dirpath)
    return EvalSplit(
        train=read_matrix(dirpath / "train.rbm"),
        test=read_matrix(dirpath / "test.rbm"),
        seed=int((dirpath / "seed.txt").read_text(encoding="utf-8").strip()),
    )
