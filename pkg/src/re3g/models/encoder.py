"""Compact bidirectional text encoder used by both retrieval towers and the
cross-encoder scoring head.

Token + learned position embeddings feed an optional stack of transformer
layers; the sequence is pooled to a single d-dim vector either by masked mean
or by the first position. Desk-scale defaults keep the whole pipeline
trainable on one CPU core.
"""

from __future__ import annotations

import torch
from torch import nn


class TextEncoder(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_model: int = 64,
        n_layers: int = 1,
        n_heads: int = 4,
        ff_dim: int | None = None,
        max_len: int = 256,
        pooling: str = "mean",
        dropout: float = 0.1,
        pad_id: int = 0,
        with_pair_features: bool = False,
    ):
        super().__init__()
        if pooling not in ("mean", "first"):
            raise ValueError(f"unknown pooling {pooling!r}")
        self.d_model = d_model
        self.max_len = max_len
        self.pooling = pooling
        self.pad_id = pad_id
        self.tok_emb = nn.Embedding(vocab_size, d_model, padding_idx=pad_id)
        # positions only matter once attention can use them; a pure bag
        # encoder stays order-free
        self.use_positions = n_layers > 0
        self.pos_emb = nn.Embedding(max_len, d_model)
        # pair-input features: which segment a token belongs to, and whether
        # its word also occurs in the other segment (gives lexical overlap a
        # shared representation direction the readout can use immediately)
        self.with_pair_features = with_pair_features
        if with_pair_features:
            self.seg_emb = nn.Embedding(2, d_model)
            self.match_emb = nn.Parameter(torch.zeros(d_model))
            nn.init.normal_(self.match_emb, std=0.5)
            nn.init.normal_(self.seg_emb.weight, std=0.1)
        self.dropout = nn.Dropout(dropout)
        if n_layers > 0:
            layer = nn.TransformerEncoderLayer(
                d_model=d_model,
                nhead=n_heads,
                dim_feedforward=ff_dim or 2 * d_model,
                dropout=dropout,
                batch_first=True,
            )
            self.layers = nn.TransformerEncoder(layer, num_layers=n_layers)
        else:
            # pure bag of embeddings: no norm, token magnitudes carry
            # importance weighting through the mean pool
            self.layers = None
        self.out = nn.Linear(d_model, d_model)
        # identity start: near-orthogonal random embeddings already match
        # themselves under a dot product, training then reweights words
        nn.init.eye_(self.out.weight)

    def forward(
        self,
        ids: torch.Tensor,
        segments: torch.Tensor | None = None,
        match: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """ids: [B, L] padded with pad_id; returns [B, d_model].

        segments/match are optional [B, L] tensors (segment index, and a
        float mask of tokens whose word occurs in both segments); only used
        when the encoder was built with_pair_features.
        """
        if ids.size(1) > self.max_len:
            ids = ids[:, : self.max_len]
            if segments is not None:
                segments = segments[:, : self.max_len]
            if match is not None:
                match = match[:, : self.max_len]
        mask = ids.ne(self.pad_id)  # True = real token
        h = self.tok_emb(ids)
        if self.use_positions:
            positions = torch.arange(ids.size(1), device=ids.device)
            h = h + self.pos_emb(positions)[None, :, :]
        if self.with_pair_features:
            if segments is not None:
                h = h + self.seg_emb(segments)
            if match is not None:
                h = h + match.unsqueeze(-1) * self.match_emb
        h = self.dropout(h)
        if self.layers is not None:
            h = self.layers(h, src_key_padding_mask=~mask)
        if self.pooling == "first":
            pooled = h[:, 0, :]
        else:
            denom = mask.sum(dim=1, keepdim=True).clamp(min=1)
            pooled = (h * mask.unsqueeze(-1)).sum(dim=1) / denom
        return self.out(pooled)


def pad_batch(id_lists: list[list[int]], pad_id: int = 0) -> torch.Tensor:
    """Right-pad variable-length id lists into a [B, L] long tensor."""
    if not id_lists:
        raise ValueError("empty batch")
    width = max(1, max(len(ids) for ids in id_lists))
    out = torch.full((len(id_lists), width), pad_id, dtype=torch.long)
    for i, ids in enumerate(id_lists):
        if ids:
            out[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
    return out
