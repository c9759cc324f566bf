"""Model registry: uniform fit/recommend wrappers over every algorithm,
plus binary model files with a kind + configuration header.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import factor, graph, linear
from .ranking import popularity_ranking, rank_items
from .sparse import (
    InteractionMatrix,
    SparseWeights,
    as_weights,
    read_matrix_bytes,
    write_matrix_bytes,
)

MODEL_KINDS = (
    "ease-r", "slim", "slim-enet", "als", "funk-svd", "p3alpha", "rp3beta", "top-pop",
)

_MODEL_MAGIC = b"RBMD"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    """A model kind plus configuration overrides."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")


def default_config(kind: str):
    """Published defaults for each model kind."""
    if kind == "ease-r":
        return linear.EaseConfig()
    if kind == "slim":
        return linear.SlimConfig(l1_ratio=1.0)
    if kind == "slim-enet":
        return linear.SlimConfig(l1_ratio=0.5)
    if kind == "als":
        return factor.AlsConfig()
    if kind == "funk-svd":
        return factor.SgdConfig()
    if kind == "p3alpha":
        return graph.WalkConfig(beta=0.0)
    if kind == "rp3beta":
        return graph.WalkConfig()
    if kind == "top-pop":
        return None
    raise ValueError(f"unknown model kind {kind!r}")


def build_config(spec: ModelSpec):
    cfg = default_config(spec.kind)
    if cfg is None:
        if spec.params:
            raise ValueError("top-pop takes no parameters")
        return None
    return replace(cfg, **spec.params)


def config_dict(config) -> dict:
    return {} if config is None else asdict(config)


class ItemModelRecommender:
    """Recommender over an item-item weight matrix."""

    def __init__(self, kind: str, config, weights: SparseWeights, fit_info: dict | None = None):
        self.kind = kind
        self._config = config
        self.weights = weights
        self.fit_info = fit_info or {}

    @property
    def config(self) -> dict:
        return config_dict(self._config)

    @property
    def n_items(self) -> int:
        return self.weights.n_cols

    def recommend(self, train, user, k, filter_seen=True, popularity=None):
        return linear.score_item_model(
            self.weights, train, user, k, filter_seen, popularity
        )

    def recommend_batch(self, train, users, k, filter_seen=True, popularity=None):
        if popularity is None:
            popularity = popularity_ranking(train)
        scores = np.asarray(
            (train.to_scipy()[np.asarray(users, dtype=np.int64)] @ self.weights.to_scipy())
            .todense()
        )
        out = []
        for row, u in enumerate(users):
            seen, _ = train.row(int(u))
            out.append(rank_items(scores[row], seen, k, popularity, filter_seen))
        return out

    def recommend_from_history(self, history, k, popularity, filter_seen=True):
        """Score an unseen user directly from an explicit history."""
        scores = linear.item_scores_from_history(self.weights, np.asarray(history))
        return rank_items(scores, np.asarray(history), k, popularity, filter_seen)


class LatentRecommender:
    """Recommender over dense user/item factors."""

    def __init__(self, kind: str, config, model: factor.LatentModel, fit_info: dict | None = None):
        self.kind = kind
        self._config = config
        self.latent = model
        self.fit_info = fit_info or {}

    @property
    def config(self) -> dict:
        return config_dict(self._config)

    @property
    def n_items(self) -> int:
        return self.latent.item_factors.shape[0]

    @property
    def n_users(self) -> int:
        return self.latent.user_factors.shape[0]

    def recommend(self, train, user, k, filter_seen=True, popularity=None):
        return factor.score_latent(self.latent, train, user, k, filter_seen, popularity)

    def recommend_batch(self, train, users, k, filter_seen=True, popularity=None):
        if popularity is None:
            popularity = popularity_ranking(train)
        users = np.asarray(users, dtype=np.int64)
        scores = self.latent.user_factors[users] @ self.latent.item_factors.T
        out = []
        for row, u in enumerate(users):
            seen, _ = train.row(int(u))
            out.append(rank_items(scores[row], seen, k, popularity, filter_seen))
        return out

    def fold_in(self, history, k, popularity, filter_seen=True, gram=None):
        """Score an unseen user by solving their factor row in place."""
        if self.kind != "als":
            raise ValueError(f"{self.kind} does not support fold-in")
        u = factor.fold_in_user(self.latent, self._config, history, gram=gram)
        scores = self.latent.item_factors @ u
        return rank_items(scores, np.asarray(history), k, popularity, filter_seen)


class PopularityRecommender:
    """Most-popular-items baseline; identical list for every user."""

    kind = "top-pop"

    def __init__(self, ranking: np.ndarray):
        self.ranking = np.asarray(ranking, dtype=np.int64)
        self.fit_info = {}

    @property
    def config(self) -> dict:
        return {}

    @property
    def n_items(self) -> int:
        return len(self.ranking)

    def recommend(self, train, user, k, filter_seen=True, popularity=None):
        if not 0 <= user < train.n_rows:
            raise IndexError(f"user {user} out of bounds for {train.n_rows} users")
        seen, _ = train.row(int(user))
        return self.recommend_from_history(seen, k, None, filter_seen)

    def recommend_batch(self, train, users, k, filter_seen=True, popularity=None):
        return [self.recommend(train, int(u), k, filter_seen) for u in users]

    def recommend_from_history(self, history, k, popularity, filter_seen=True):
        if not filter_seen or len(history) == 0:
            return self.ranking[:k].copy()
        blocked = np.zeros(len(self.ranking), dtype=bool)
        blocked[np.asarray(history)] = True
        return self.ranking[~blocked[self.ranking]][:k]


def fit_model(spec: ModelSpec, train: InteractionMatrix):
    """Fit any registered model kind on a binary training matrix."""
    cfg = build_config(spec)
    if spec.kind == "ease-r":
        return ItemModelRecommender(spec.kind, cfg, linear.fit_ease(train, cfg))
    if spec.kind in ("slim", "slim-enet"):
        weights, stats = linear.fit_slim(train, cfg, return_stats=True)
        info = {"max_sweeps": int(stats.sweeps.max()) if len(stats.sweeps) else 0}
        return ItemModelRecommender(spec.kind, cfg, weights, info)
    if spec.kind == "als":
        return LatentRecommender(spec.kind, cfg, factor.fit_als(train, cfg))
    if spec.kind == "funk-svd":
        return LatentRecommender(spec.kind, cfg, factor.fit_funk_svd(train, cfg))
    if spec.kind == "p3alpha":
        return ItemModelRecommender(spec.kind, cfg, graph.fit_p3alpha(train, cfg))
    if spec.kind == "rp3beta":
        return ItemModelRecommender(spec.kind, cfg, graph.fit_rp3beta(train, cfg))
    if spec.kind == "top-pop":
        return PopularityRecommender(graph.fit_top_popular(train))
    raise ValueError(f"unknown model kind {spec.kind!r}")


def same_model(a, b) -> bool:
    """Bitwise equality of two fitted models of the same kind."""
    if a.kind != b.kind or a.config != b.config:
        return False
    if isinstance(a, ItemModelRecommender):
        return a.weights == b.weights
    if isinstance(a, LatentRecommender):
        return np.array_equal(a.latent.user_factors, b.latent.user_factors) and np.array_equal(
            a.latent.item_factors, b.latent.item_factors
        )
    return np.array_equal(a.ranking, b.ranking)


# ---------------------------------------------------------------------------
# model files: magic, version, JSON header (kind + config), payload

def save_model_bytes(model) -> bytes:
    header = {"kind": model.kind, "config": model.config, "fit_info": model.fit_info}
    if isinstance(model, ItemModelRecommender):
        header["family"] = "item"
        payload = write_matrix_bytes(model.weights)
    elif isinstance(model, LatentRecommender):
        header["family"] = "latent"
        u, v = model.latent.user_factors, model.latent.item_factors
        buf = io.BytesIO()
        buf.write(struct.pack("<QQQ", u.shape[0], v.shape[0], u.shape[1]))
        buf.write(u.astype("<f8").tobytes())
        buf.write(v.astype("<f8").tobytes())
        payload = buf.getvalue()
    elif isinstance(model, PopularityRecommender):
        header["family"] = "popularity"
        payload = struct.pack("<Q", len(model.ranking)) + model.ranking.astype("<i8").tobytes()
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return (
        _MODEL_MAGIC
        + struct.pack("<II", MODEL_FORMAT_VERSION, len(head))
        + head
        + payload
    )


def _typed_config(kind: str, raw: dict):
    cfg = default_config(kind)
    return None if cfg is None else replace(cfg, **raw)


def load_model_bytes(data: bytes):
    if data[:4] != _MODEL_MAGIC:
        raise ValueError("not a model file (bad magic bytes)")
    version, head_len = struct.unpack_from("<II", data, 4)
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    pos = 4 + 8
    header = json.loads(data[pos:pos + head_len].decode("utf-8"))
    payload = data[pos + head_len:]
    kind = header["kind"]
    cfg = _typed_config(kind, header.get("config", {}))
    info = header.get("fit_info", {})
    family = header["family"]
    if family == "item":
        return ItemModelRecommender(kind, cfg, as_weights(read_matrix_bytes(payload)), info)
    if family == "latent":
        n_users, n_items, f = struct.unpack_from("<QQQ", payload, 0)
        off = struct.calcsize("<QQQ")
        u = np.frombuffer(payload, dtype="<f8", count=n_users * f, offset=off)
        off += u.nbytes
        v = np.frombuffer(payload, dtype="<f8", count=n_items * f, offset=off)
        latent = factor.LatentModel(
            u.reshape(n_users, f).copy(), v.reshape(n_items, f).copy()
        )
        return LatentRecommender(kind, cfg, latent, info)
    if family == "popularity":
        (n,) = struct.unpack_from("<Q", payload, 0)
        ranking = np.frombuffer(payload, dtype="<i8", count=n, offset=8).copy()
        return PopularityRecommender(ranking)
    raise ValueError(f"unknown model family {family!r}")


def save_model(model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return load_model_bytes(fh.read())
