"""Key/value token selection for global attention in multi-view transformers.

Frames are chosen by farthest point sampling over cosine distances between
per-frame descriptors; tokens inside the chosen frames are then pruned per
layer (frame-local, strided downsampling, or kept in full).
"""

from .attention import (
    AttentionInputs,
    AttentionStats,
    attention_entropy_stats,
    entropy_stats_from_weights,
    full_attention,
    local_attention,
    mean_pool_attention,
    restricted_attention,
)
from .cost import CostReport, attention_flop_model
from .exceptions import ArgumentError, DimensionError, FormatError
from .features import (
    cosine_distance,
    covisibility_matrix,
    distance_from_covisibility,
    load_features,
    normalize_rows,
)
from .frames import (
    BaselineFrameSelector,
    DiverseFrameSelector,
    FrameSelection,
    brute_force_kcenter,
    kcenter_cost,
    select_baseline,
    select_diverse_frames,
)
from .metrics import (
    DepthPair,
    PointCloud,
    Trajectory,
    align_trajectories,
    ate,
    cloud_metrics,
    depth_metrics,
    rpe,
)
from .model import (
    ToyGeometryTransformer,
    TokenBatch,
    build_toy_model,
    forward,
    frame_selection_for_batch,
    random_batch,
)
from .plans import LayerPlan, LayerStrategy, build_layer_plan, entropy_adaptive_plan
from .tokens import (
    TokenDiversitySelector,
    TokenGrid,
    TokenIndexSet,
    activation_select,
    resolve_token_set,
    standard_downsample,
    tld_select,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionInputs",
    "AttentionStats",
    "attention_entropy_stats",
    "entropy_stats_from_weights",
    "full_attention",
    "local_attention",
    "mean_pool_attention",
    "restricted_attention",
    "CostReport",
    "attention_flop_model",
    "ArgumentError",
    "DimensionError",
    "FormatError",
    "cosine_distance",
    "covisibility_matrix",
    "distance_from_covisibility",
    "load_features",
    "normalize_rows",
    "BaselineFrameSelector",
    "DiverseFrameSelector",
    "FrameSelection",
    "brute_force_kcenter",
    "kcenter_cost",
    "select_baseline",
    "select_diverse_frames",
    "DepthPair",
    "PointCloud",
    "Trajectory",
    "align_trajectories",
    "ate",
    "cloud_metrics",
    "depth_metrics",
    "rpe",
    "ToyGeometryTransformer",
    "TokenBatch",
    "build_toy_model",
    "forward",
    "frame_selection_for_batch",
    "random_batch",
    "LayerPlan",
    "LayerStrategy",
    "build_layer_plan",
    "entropy_adaptive_plan",
    "TokenDiversitySelector",
    "TokenGrid",
    "TokenIndexSet",
    "activation_select",
    "resolve_token_set",
    "standard_downsample",
    "tld_select",
]
