from .losses import infonce_loss, infonce_multi_positive
from .model import CrossEncoder, CrossEncoderConfig, RerankCandidate, rerank
from .sampling import (
    NegativeSampler,
    build_pools,
    read_pools,
    sample_negatives,
    write_pools,
)
from .train import (
    CHECKPOINT_NAME,
    rerank_recall,
    resample_fraction,
    save_reranker,
    train_reranker,
)

__all__ = [
    "CHECKPOINT_NAME",
    "CrossEncoder",
    "CrossEncoderConfig",
    "NegativeSampler",
    "RerankCandidate",
    "build_pools",
    "infonce_loss",
    "infonce_multi_positive",
    "read_pools",
    "rerank",
    "rerank_recall",
    "resample_fraction",
    "sample_negatives",
    "save_reranker",
    "train_reranker",
    "write_pools",
]
