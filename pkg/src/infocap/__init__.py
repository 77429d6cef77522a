"""Hierarchical-attention video captioning with an importance-weighted loss."""

from .corpus import (
    BOS,
    EOS,
    PAD,
    UNK,
    CaptionCorpus,
    CorpusError,
    VideoEntry,
    Vocabulary,
    build_vocabulary,
    corpus_bias_report,
    decode_caption,
    encode_caption,
    load_corpus,
    save_corpus,
    tokenize,
)
from .importance import (
    ImportanceTable,
    build_importance_table,
    importance,
    information_content,
    relevance,
)
from .features import (
    FeatureConfig,
    FeatureError,
    VideoFeatures,
    biased_corpus,
    load_features,
    save_features_dir,
    load_features_dir,
    synthesize_features,
    synthetic_corpus,
)
from .captioner import (
    ModelDims,
    ModelParams,
    forward_teacher_forced,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .objective import LossConfig, cross_entropy, information_loss, loss_report
from .trainer import TrainConfig, TrainResult, adam_step, lr_schedule, train
from .decoding import DecodeConfig, generate
from .metrics import EvalReport, bleu4, cider, evaluate
from .estimator import HierarchicalAttentionCaptioner

__version__ = "0.1.0"

__all__ = [
    "BOS", "EOS", "PAD", "UNK",
    "CaptionCorpus", "CorpusError", "VideoEntry", "Vocabulary",
    "build_vocabulary", "corpus_bias_report", "decode_caption",
    "encode_caption", "load_corpus", "save_corpus", "tokenize",
    "ImportanceTable", "build_importance_table", "importance",
    "information_content", "relevance",
    "FeatureConfig", "FeatureError", "VideoFeatures", "biased_corpus",
    "load_features", "save_features_dir", "load_features_dir",
    "synthesize_features", "synthetic_corpus",
    "ModelDims", "ModelParams", "forward_teacher_forced", "init_params",
    "load_checkpoint", "save_checkpoint",
    "LossConfig", "cross_entropy", "information_loss", "loss_report",
    "TrainConfig", "TrainResult", "adam_step", "lr_schedule", "train",
    "DecodeConfig", "generate",
    "EvalReport", "bleu4", "cider", "evaluate",
    "HierarchicalAttentionCaptioner",
]
