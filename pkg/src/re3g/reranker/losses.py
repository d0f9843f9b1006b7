"""Temperature-scaled contrastive objective for reranker training."""

from __future__ import annotations

import logging

import torch

logger = logging.getLogger(__name__)


def infonce_loss(
    pos_score: torch.Tensor, neg_scores: torch.Tensor, tau: float = 0.07
) -> torch.Tensor:
    """-log( exp(s+/tau) / sum_{p in {pos} + negs} exp(s_p/tau) ).

    Scores are raw pre-sigmoid logits. Computed with max subtraction via
    logsumexp, so tiny temperatures stay finite.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if pos_score.dim() != 0:
        raise ValueError("pos_score must be a scalar tensor")
    neg_scores = neg_scores.reshape(-1)
    if neg_scores.numel() == 0:
        logger.warning("infonce_loss called with no negatives; loss is 0")
        return pos_score * 0.0
    scaled = torch.cat([pos_score.reshape(1), neg_scores]) / tau
    return torch.logsumexp(scaled, dim=0) - pos_score / tau


def infonce_multi_positive(
    pos_scores: torch.Tensor, neg_scores: torch.Tensor, tau: float = 0.07
) -> torch.Tensor:
    """One InfoNCE term per positive against the shared negatives, summed."""
    pos_scores = pos_scores.reshape(-1)
    if pos_scores.numel() == 0:
        raise ValueError("at least one positive score is required")
    terms = [infonce_loss(p, neg_scores, tau) for p in pos_scores]
    return torch.stack(terms).sum()
