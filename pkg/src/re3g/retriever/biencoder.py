"""Two-tower dense retrieval model: separate context and passage encoders
scored by dot product."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..models import TextEncoder, pad_batch
from ..textproc import Vocab


@dataclass(frozen=True)
class BiEncoderConfig:
    d_model: int = 64
    n_layers: int = 1
    n_heads: int = 4
    max_context_tokens: int = 48
    max_passage_tokens: int = 32
    dropout: float = 0.1
    # one token embedding table for both towers: trained from scratch the
    # two vocabular spaces would otherwise have to align word by word
    share_embeddings: bool = True


class BiEncoder(torch.nn.Module):
    def __init__(self, vocab: Vocab, config: BiEncoderConfig = BiEncoderConfig()):
        super().__init__()
        self.vocab = vocab
        self.config = config
        self.context_encoder = TextEncoder(
            len(vocab),
            d_model=config.d_model,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            max_len=config.max_context_tokens,
            pooling="mean",
            dropout=config.dropout,
            pad_id=vocab.pad_id,
        )
        self.passage_encoder = TextEncoder(
            len(vocab),
            d_model=config.d_model,
            n_layers=config.n_layers,
            n_heads=config.n_heads,
            max_len=config.max_passage_tokens,
            pooling="mean",
            dropout=config.dropout,
            pad_id=vocab.pad_id,
        )
        if config.share_embeddings:
            self.passage_encoder.tok_emb = self.context_encoder.tok_emb

    @property
    def embeddings_tied(self) -> bool:
        return self.passage_encoder.tok_emb is self.context_encoder.tok_emb

    def untie_embeddings(self) -> None:
        """Give the passage tower its own embedding copy.

        Contrastive phase-1 training bootstraps both towers through one
        table; afterwards the towers must be independent so freezing the
        passage encoder (phase 2) really freezes it.
        """
        if self.embeddings_tied:
            import copy as _copy

            self.passage_encoder.tok_emb = _copy.deepcopy(self.context_encoder.tok_emb)

    @property
    def dim(self) -> int:
        return self.config.d_model

    def _ids(self, texts: list[str], max_tokens: int) -> torch.Tensor:
        for t in texts:
            if not t.strip():
                raise ValueError("cannot encode an empty string")
        return pad_batch(
            [self.vocab.encode(t, max_tokens) for t in texts], self.vocab.pad_id
        )

    def context_vectors(self, texts: list[str]) -> torch.Tensor:
        return self.context_encoder(self._ids(texts, self.config.max_context_tokens))

    def passage_vectors(self, texts: list[str]) -> torch.Tensor:
        return self.passage_encoder(self._ids(texts, self.config.max_passage_tokens))

    @torch.no_grad()
    def encode_context(self, text: str) -> np.ndarray:
        self.eval()
        return self.context_vectors([text])[0].numpy()

    @torch.no_grad()
    def encode_passage(self, text: str) -> np.ndarray:
        self.eval()
        return self.passage_vectors([text])[0].numpy()

    @torch.no_grad()
    def encode_passages(self, texts: list[str], batch_size: int = 64) -> np.ndarray:
        self.eval()
        chunks = [
            self.passage_vectors(texts[i : i + batch_size]).numpy()
            for i in range(0, len(texts), batch_size)
        ]
        return np.concatenate(chunks, axis=0)

    def weight_hash(self) -> str:
        h = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(tensor.detach().cpu().numpy().tobytes())
        return h.hexdigest()[:16]

    def save(self, path: str | Path, phase: int, extra: dict | None = None) -> None:
        torch.save(
            {
                "kind": "biencoder",
                "phase": phase,
                "vocab": self.vocab.tokens,
                "config": asdict(self.config),
                "state_dict": self.state_dict(),
                "extra": extra or {},
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> tuple["BiEncoder", int]:
        blob = torch.load(path, weights_only=False)
        if blob.get("kind") != "biencoder":
            raise ValueError(f"{path} is not a retriever checkpoint")
        model = cls(Vocab(blob["vocab"]), BiEncoderConfig(**blob["config"]))
        # checkpoints always hold independent towers (see untie_embeddings)
        model.untie_embeddings()
        model.load_state_dict(blob["state_dict"])
        model.eval()
        return model, blob["phase"]


def dot_similarity(c_vec, p_vec) -> float:
    """Plain inner product of two equal-width vectors."""
    c = np.asarray(c_vec, dtype=np.float64)
    p = np.asarray(p_vec, dtype=np.float64)
    if c.shape != p.shape or c.ndim != 1:
        raise ValueError(f"vector width mismatch: {c.shape} vs {p.shape}")
    return float(np.dot(c, p))
