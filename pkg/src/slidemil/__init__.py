"""Two-stage attention-MIL pipeline for tiled slide classification."""

from .attention import (
    attention_weights,
    bag_embedding,
    class_probabilities,
    instance_dropout,
    mil_forward,
    mil_loss_and_grads,
)
from .config import RunConfig, load_config
from .extractor import ExtractorSpec, TileFeatureExtractor, extractor_forward, init_extractor
from .kmeans import KMeansCluster
from .mil import MilAttentionClassifier
from .optim import AdamOptimizer, PlateauScheduler, adam_step
from .pca import PrincipalComponents, pca_fit_transform
from .pipeline import (
    VARIANTS,
    EvalReport,
    PreparedSlide,
    TwoStageClassifier,
    VariantSpec,
    prepare_dataset,
    prepare_slide,
    run_ablation_suite,
    split_slides,
)
from .preprocess import (
    TileGrid,
    TileRef,
    blue_ratio,
    downsample,
    extract_tile_grid,
    filter_tiles,
    rank_by_blue_ratio,
    tissue_mask,
)
from .reinhard import ColorStats, ReinhardNormalizer, lab_stats, reinhard_normalize
from .selection import (
    SelectionResult,
    allocate_budget,
    cluster_mean_attention,
    select_attention_clusters,
    select_top_attention,
)
from .synthdata import (
    GroundTruth,
    SlideRecord,
    SyntheticSlideSpec,
    generate_dataset,
    generate_slide,
    selection_recall,
)
from .tensorio import load_features, load_tensors, save_features, save_tensors

__version__ = "0.1.0"
