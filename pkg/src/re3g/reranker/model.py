"""Cross-encoder relevance scorer over concatenated (passage, context) pairs.

The joint sequence is [bos] passage [sep] context; a linear head on the
first-position representation produces the raw logit, squashed by a sigmoid
for the (0, 1) relevance score. When the pair overflows the budget, the
context loses tokens from its left (oldest turns) before the passage loses
anything.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from ..corpus import Passage
from ..models import TextEncoder, pad_batch
from ..retriever.index import RetrievalResult
from ..textproc import Vocab


@dataclass(frozen=True)
class CrossEncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_joint_tokens: int = 192
    dropout: float = 0.1
    # start attention symmetric (K = Q): identical tokens across the
    # passage/context boundary attend to each other before any training,
    # which is the lexical-match circuit this model must otherwise discover
    symmetric_attention_init: bool = True


@dataclass(frozen=True)
class RerankCandidate:
    passage_id: str
    retriever_rank: int
    retriever_score: float
    reranker_score: float
    final_rank: int


class CrossEncoder(torch.nn.Module):
    def __init__(self, vocab: Vocab, config: CrossEncoderConfig = CrossEncoderConfig()):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.encoder = TextEncoder(
            len(vocab),
            d_model=config.d_model,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            max_len=config.max_joint_tokens,
            pooling="mean",
            dropout=config.dropout,
            pad_id=vocab.pad_id,
            with_pair_features=True,
        )
        self.head = torch.nn.Linear(config.d_model, 1)
        if config.symmetric_attention_init and self.encoder.layers is not None:
            with torch.no_grad():
                for layer in self.encoder.layers.layers:
                    w = layer.self_attn.in_proj_weight  # rows stack [Q; K; V]
                    w[config.d_model : 2 * config.d_model].copy_(w[: config.d_model])

    def warm_start_embeddings(self, embedding_weight: torch.Tensor) -> None:
        """Copy a trained token embedding table (e.g. the phase-1 retriever's)
        so lexical structure is present before reranker training."""
        with torch.no_grad():
            self.encoder.tok_emb.weight.copy_(embedding_weight)

    def joint_ids(self, passage_text: str, ctx_string: str) -> list[int]:
        if not passage_text.strip() or not ctx_string.strip():
            raise ValueError("passage and context must be non-empty")
        budget = self.config.max_joint_tokens
        psg = self.vocab.encode(passage_text, budget - 3)
        room = budget - len(psg) - 3
        ctx = self.vocab.encode(ctx_string)
        if room > 0:
            ctx = ctx[-room:]  # drop oldest context tokens first
        else:
            ctx = []
        return [self.vocab.bos_id] + psg + [self.vocab.sep_id] + ctx

    def _pair_features(
        self, passage_text: str, ctx_string: str
    ) -> tuple[list[int], list[int], list[float]]:
        ids = self.joint_ids(passage_text, ctx_string)
        sep_at = ids.index(self.vocab.sep_id)
        segments = [0] * (sep_at + 1) + [1] * (len(ids) - sep_at - 1)
        common = set(ids[1:sep_at]) & set(ids[sep_at + 1 :])
        match = [1.0 if tok in common else 0.0 for tok in ids]
        return ids, segments, match

    def pair_logits(self, passage_texts: list[str], ctx_string: str) -> torch.Tensor:
        """Raw pre-sigmoid logits for a batch of passages against one context."""
        feats = [self._pair_features(t, ctx_string) for t in passage_texts]
        ids = pad_batch([f[0] for f in feats], self.vocab.pad_id)
        segments = pad_batch([f[1] for f in feats], 0)
        width = ids.size(1)
        match = torch.zeros(len(feats), width)
        for i, f in enumerate(feats):
            if f[2]:
                match[i, : len(f[2])] = torch.tensor(f[2])
        h = self.encoder(ids, segments=segments, match=match)
        return self.head(h).squeeze(-1)

    @torch.no_grad()
    def score_pair(self, passage_text: str, ctx_string: str) -> float:
        self.eval()
        logit = self.pair_logits([passage_text], ctx_string)[0]
        return float(torch.sigmoid(logit))

    @torch.no_grad()
    def score_pairs(
        self, passage_texts: list[str], ctx_string: str, batch_size: int = 64
    ) -> list[float]:
        self.eval()
        out: list[float] = []
        for lo in range(0, len(passage_texts), batch_size):
            logits = self.pair_logits(passage_texts[lo : lo + batch_size], ctx_string)
            out.extend(torch.sigmoid(logits).tolist())
        return out

    def weight_hash(self) -> str:
        h = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(tensor.detach().cpu().numpy().tobytes())
        return h.hexdigest()[:16]

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        torch.save(
            {
                "kind": "cross_encoder",
                "vocab": self.vocab.tokens,
                "config": asdict(self.config),
                "state_dict": self.state_dict(),
                "extra": extra or {},
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "CrossEncoder":
        blob = torch.load(path, weights_only=False)
        if blob.get("kind") != "cross_encoder":
            raise ValueError(f"{path} is not a reranker checkpoint")
        model = cls(Vocab(blob["vocab"]), CrossEncoderConfig(**blob["config"]))
        model.load_state_dict(blob["state_dict"])
        model.eval()
        return model


def rerank(
    model: CrossEncoder,
    ctx_string: str,
    candidates: list[RetrievalResult],
    passages_by_id: dict[str, Passage],
    top_n: int,
) -> list[RerankCandidate]:
    """Re-order retriever candidates by cross-encoder score, keep top_n.

    The pre-truncation ranking is a permutation of the inputs; ties break by
    retriever rank, then passage_id.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    scores = model.score_pairs(
        [passages_by_id[c.passage_id].text for c in candidates], ctx_string
    )
    order = sorted(
        zip(candidates, scores),
        key=lambda cs: (-cs[1], cs[0].rank, cs[0].passage_id),
    )
    return [
        RerankCandidate(
            passage_id=c.passage_id,
            retriever_rank=c.rank,
            retriever_score=c.retriever_score,
            reranker_score=s,
            final_rank=i,
        )
        for i, (c, s) in enumerate(order[:top_n], start=1)
    ]
