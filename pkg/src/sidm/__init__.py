"""sidm: suicidal-ideation detection model.

A from-scratch, framework-free text classifier (embedding -> 1-D conv ->
max-pool -> BiGRU -> additive attention -> global average pooling -> sigmoid
head) with hand-derived backpropagation, Adam/BCE training, a seven-metric
evaluation suite, Shapley-value token attributions, and a bit-exact model
container. Scikit-learn style estimators wrap the pipeline for ecosystem
compatibility; the `sidm` CLI drives it end to end.
"""

from .config import RunConfig
from .container import ModelContainer
from .corpus import DatasetSplit, Record, class_balance, load_csv, split, write_csv
from .estimators import CnnBiGruAttentionClassifier, PaddedSequenceVectorizer
from .explain import (
    Attribution,
    CoalitionSpec,
    attention_export,
    exact_shapley,
    explanation_report,
    sampled_shapley,
)
from .layers import CnnBiGruAttention, ModelConfig, ModelParams, shape_chain
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    RocCurve,
    compute_report,
    confusion,
    emit_report,
    mse_rmse,
    roc_auc,
    scalar_metrics,
)
from .numcore import RngState, finite_diff_grad, glorot_uniform
from .textprep import Vocabulary, build_vocab, clean, encode_pad, tokenize_stem
from .trainer import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    bce_loss,
    hyper_search,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Attribution",
    "CnnBiGruAttention",
    "CnnBiGruAttentionClassifier",
    "CoalitionSpec",
    "ConfusionMatrix",
    "DatasetSplit",
    "MetricsReport",
    "ModelConfig",
    "ModelContainer",
    "ModelParams",
    "PaddedSequenceVectorizer",
    "Record",
    "RngState",
    "RocCurve",
    "RunConfig",
    "TrainConfig",
    "TrainHistory",
    "Vocabulary",
    "adam_step",
    "attention_export",
    "bce_loss",
    "build_vocab",
    "class_balance",
    "clean",
    "compute_report",
    "confusion",
    "emit_report",
    "encode_pad",
    "exact_shapley",
    "explanation_report",
    "finite_diff_grad",
    "glorot_uniform",
    "hyper_search",
    "load_csv",
    "mse_rmse",
    "roc_auc",
    "sampled_shapley",
    "scalar_metrics",
    "shape_chain",
    "split",
    "tokenize_stem",
    "train",
    "write_csv",
]
