"""Training objectives for the three retriever phases, in score space.

All functions take raw candidate scores as 1-D tensors and return scalar
tensors, so they are directly checkable against finite differences and
closed-form oracles. Batch assembly lives in the training loops.
"""

from __future__ import annotations

import torch
from torch.nn import functional as F


def contrastive_nll(pos_score: torch.Tensor, neg_scores: torch.Tensor) -> torch.Tensor:
    """Softmax NLL of one positive against its negatives.

    loss = -log( exp(s+) / (exp(s+) + sum_j exp(s_j)) )
    """
    if pos_score.dim() != 0:
        raise ValueError("pos_score must be a scalar tensor")
    scores = torch.cat([pos_score.reshape(1), neg_scores.reshape(-1)])
    return torch.logsumexp(scores, dim=0) - pos_score


def marginal_nll(
    retriever_scores: torch.Tensor, answer_log_probs: torch.Tensor
) -> torch.Tensor:
    """Negative log of the answer marginal over retrieved candidates.

    loss = -log sum_p softmax(retriever_scores)_p * P_gen(answer | C, p)

    answer_log_probs holds log P_gen per candidate; the sum is taken in log
    space for stability.
    """
    if retriever_scores.shape != answer_log_probs.shape:
        raise ValueError(
            f"score/logprob length mismatch: {tuple(retriever_scores.shape)} "
            f"vs {tuple(answer_log_probs.shape)}"
        )
    log_p_ret = F.log_softmax(retriever_scores, dim=0)
    return -torch.logsumexp(log_p_ret + answer_log_probs, dim=0)


def kl_divergence(p_scores: torch.Tensor, q_scores: torch.Tensor) -> torch.Tensor:
    """KL( softmax(p_scores) || softmax(q_scores) ), zero-probability safe."""
    if p_scores.shape != q_scores.shape:
        raise ValueError(
            f"candidate length mismatch: {tuple(p_scores.shape)} vs {tuple(q_scores.shape)}"
        )
    if p_scores.numel() < 2:
        raise ValueError("KL needs at least 2 candidates")
    p = F.softmax(p_scores, dim=0)
    log_p = F.log_softmax(p_scores, dim=0)
    log_q = F.log_softmax(q_scores, dim=0)
    terms = torch.where(p > 0, p * (log_p - log_q), torch.zeros_like(p))
    return terms.sum()


def distillation_kl(
    reranker_scores: torch.Tensor,
    retriever_scores: torch.Tensor,
    direction: str = "teacher_student",
) -> torch.Tensor:
    """Phase-3 objective between the two passage distributions.

    The reranker distribution is the fixed teacher (no gradient); the
    retriever softmax is the student. ``direction`` picks which argument
    of the KL the teacher occupies: "teacher_student" is KL(teacher||student).
    """
    teacher = reranker_scores.detach()
    if direction == "teacher_student":
        return kl_divergence(teacher, retriever_scores)
    if direction == "student_teacher":
        return kl_divergence(retriever_scores, teacher)
    raise ValueError(f"unknown KL direction {direction!r}")
