from .biencoder import BiEncoder, BiEncoderConfig, dot_similarity
from .index import DenseIndex, RetrievalResult, build_index, next_snapshot_version
from .losses import contrastive_nll, distillation_kl, kl_divergence, marginal_nll
from .train import (
    build_query,
    checkpoint_path,
    evaluate_recall,
    phase1_contrastive_loss,
    require_phase_checkpoint,
    save_phase,
    train_phase1,
    train_phase2,
    train_phase3,
)

__all__ = [
    "BiEncoder",
    "BiEncoderConfig",
    "DenseIndex",
    "RetrievalResult",
    "build_index",
    "build_query",
    "checkpoint_path",
    "contrastive_nll",
    "distillation_kl",
    "dot_similarity",
    "evaluate_recall",
    "kl_divergence",
    "marginal_nll",
    "next_snapshot_version",
    "phase1_contrastive_loss",
    "require_phase_checkpoint",
    "save_phase",
    "train_phase1",
    "train_phase2",
    "train_phase3",
]
