"""Cross-graph entity alignment and recommendation engine.

Two knowledge graphs with multimodal node features are embedded by a shared
encoder (attribute pooling, cross-modal attention, relation-aware graph
attention with jumping knowledge). A contrastive pretraining phase pulls
aligned entity pairs together across graphs; a fine-tuning phase trains a
path-aware recommendation predictor on user-item interactions.
"""

from .autodiff import ParameterSet, Tensor, grad_check, no_grad
from .config import EncoderConfig, TrainConfig, load_config
from .data import (
    AlignmentSet,
    FeatureStore,
    InteractionSet,
    KnowledgeGraph,
    MemoryBank,
    Subgraph,
    binarize_interactions,
    load_graph,
    sample_negatives,
    sample_subgraph,
    select_top_k_attributes,
)
from .encoders import EntityEncoding, encode_entity
from .metrics import MetricReport, early_stop_check, eval_alignment, eval_recommendation
from .synth import SyntheticSpec, gen_synthetic, write_dataset
from .training import (
    TrainReport,
    cosine_sim,
    finetune,
    info_nce_loss,
    path_features,
    predict,
    pretrain,
    rec_loss,
    score_pair,
)

__all__ = [
    "AlignmentSet",
    "EncoderConfig",
    "EntityEncoding",
    "FeatureStore",
    "InteractionSet",
    "KnowledgeGraph",
    "MemoryBank",
    "MetricReport",
    "ParameterSet",
    "Subgraph",
    "SyntheticSpec",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "binarize_interactions",
    "cosine_sim",
    "early_stop_check",
    "encode_entity",
    "eval_alignment",
    "eval_recommendation",
    "finetune",
    "gen_synthetic",
    "grad_check",
    "info_nce_loss",
    "load_config",
    "load_graph",
    "no_grad",
    "path_features",
    "predict",
    "pretrain",
    "rec_loss",
    "sample_negatives",
    "sample_subgraph",
    "score_pair",
    "select_top_k_attributes",
    "write_dataset",
]

__version__ = "0.1.0"
