"""Sparse collaborative-filtering benchmark suite."""

__version__ = "0.1.0"

from .sparse import (  # noqa: F401
    InteractionMatrix,
    SparseWeights,
    NumericalError,
    build_matrix,
    transpose,
    row_nonzeros,
    sparse_topk_product,
    read_matrix,
    write_matrix,
)
from .data import (  # noqa: F401
    Dataset,
    EvalSplit,
    parse_ratings,
    remap_ids,
    kcore_filter,
    binarize,
    holdout_split,
    subsample,
    interaction_matrix,
)
from .linear import EaseConfig, SlimConfig, fit_ease, fit_slim, score_item_model  # noqa: F401
from .factor import (  # noqa: F401
    AlsConfig,
    SgdConfig,
    LatentModel,
    fit_als,
    fit_funk_svd,
    fold_in_user,
    score_latent,
)
from .graph import WalkConfig, fit_p3alpha, fit_rp3beta, fit_top_popular  # noqa: F401
from .evaluation import (  # noqa: F401
    MetricsReport,
    precision_at_k,
    recall_at_k,
    ndcg_at_k,
    map_at_k,
    evaluate_model,
    aggregate_reports,
    group_users_by_profile,
    map_per_group,
)
from .models import ModelSpec, fit_model, load_model, save_model  # noqa: F401
from .bench import (  # noqa: F401
    BenchRecord,
    measure_training,
    measure_latency,
    scalability_sweep,
    cold_start_eval,
    incremental_update_eval,
)
