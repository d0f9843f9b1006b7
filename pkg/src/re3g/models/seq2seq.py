"""Compact encoder-decoder transformer for text generation.

Token embeddings are shared between encoder input, decoder input, and the
output projection (weight tying), which speeds up memorization at small
scale. Decoding is greedy or beam search; both are deterministic in eval
mode for fixed weights.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import pad_batch


class Seq2SeqModel(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        pad_id: int,
        bos_id: int,
        eos_id: int,
        d_model: int = 96,
        n_heads: int = 4,
        n_layers: int = 2,
        ff_dim: int | None = None,
        max_src: int = 320,
        max_tgt: int = 160,
        dropout: float = 0.1,
    ):
        super().__init__()
        self.pad_id = pad_id
        self.bos_id = bos_id
        self.eos_id = eos_id
        self.d_model = d_model
        self.max_src = max_src
        self.max_tgt = max_tgt
        self.tok_emb = nn.Embedding(vocab_size, d_model, padding_idx=pad_id)
        self.src_pos = nn.Embedding(max_src, d_model)
        self.tgt_pos = nn.Embedding(max_tgt, d_model)
        self.dropout = nn.Dropout(dropout)
        self.transformer = nn.Transformer(
            d_model=d_model,
            nhead=n_heads,
            num_encoder_layers=n_layers,
            num_decoder_layers=n_layers,
            dim_feedforward=ff_dim or 2 * d_model,
            dropout=dropout,
            batch_first=True,
        )
        self.out_bias = nn.Parameter(torch.zeros(vocab_size))

    def _embed_src(self, src: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(src.size(1), device=src.device)
        return self.dropout(self.tok_emb(src) + self.src_pos(pos)[None])

    def _embed_tgt(self, tgt: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(tgt.size(1), device=tgt.device)
        return self.dropout(self.tok_emb(tgt) + self.tgt_pos(pos)[None])

    def _project(self, h: torch.Tensor) -> torch.Tensor:
        return h @ self.tok_emb.weight.T + self.out_bias

    def encode(self, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        src = src[:, : self.max_src]
        src_pad = src.eq(self.pad_id)
        memory = self.transformer.encoder(
            self._embed_src(src), src_key_padding_mask=src_pad
        )
        return memory, src_pad

    def _decode_logits(
        self, memory: torch.Tensor, src_pad: torch.Tensor, tgt_in: torch.Tensor
    ) -> torch.Tensor:
        causal = nn.Transformer.generate_square_subsequent_mask(
            tgt_in.size(1), device=tgt_in.device
        )
        h = self.transformer.decoder(
            self._embed_tgt(tgt_in),
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_in.eq(self.pad_id),
            memory_key_padding_mask=src_pad,
        )
        return self._project(h)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        memory, src_pad = self.encode(src)
        return self._decode_logits(memory, src_pad, tgt_in)

    def nll_loss(self, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
        """Mean token-level negative log-likelihood of the targets.

        tgt holds raw target ids (no BOS/EOS); both are added here.
        """
        tgt_in, tgt_out = self._shift(tgt)
        logits = self(src, tgt_in)
        return F.cross_entropy(
            logits.reshape(-1, logits.size(-1)),
            tgt_out.reshape(-1),
            ignore_index=self.pad_id,
        )

    def sequence_log_prob(self, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
        """Per-example sum of target token log-probabilities, shape [B]."""
        tgt_in, tgt_out = self._shift(tgt)
        logits = self(src, tgt_in)
        logp = F.log_softmax(logits, dim=-1)
        picked = logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
        keep = tgt_out.ne(self.pad_id)
        return (picked * keep).sum(dim=1)

    def _shift(self, tgt: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        tgt = tgt[:, : self.max_tgt - 1]
        batch, _ = tgt.shape
        bos = torch.full((batch, 1), self.bos_id, dtype=torch.long, device=tgt.device)
        tgt_in = torch.cat([bos, tgt], dim=1)
        pad = torch.full((batch, 1), self.pad_id, dtype=torch.long, device=tgt.device)
        tgt_out = torch.cat([tgt, pad], dim=1)
        # the first pad after the sequence becomes EOS, later pads stay ignored
        lengths = tgt.ne(self.pad_id).sum(dim=1)
        tgt_out[torch.arange(batch), lengths] = self.eos_id
        return tgt_in, tgt_out

    @torch.no_grad()
    def greedy_decode(self, src_ids: list[int], max_new: int = 128) -> list[int]:
        self.eval()
        src = pad_batch([src_ids], self.pad_id)
        memory, src_pad = self.encode(src)
        out = [self.bos_id]
        limit = min(max_new, self.max_tgt - 1)
        for _ in range(limit):
            tgt_in = torch.tensor([out], dtype=torch.long)
            logits = self._decode_logits(memory, src_pad, tgt_in)
            nxt = int(logits[0, -1].argmax())
            if nxt == self.eos_id:
                break
            out.append(nxt)
        return out[1:]

    @torch.no_grad()
    def beam_decode(
        self, src_ids: list[int], beam_size: int = 4, max_new: int = 128
    ) -> list[int]:
        """Beam search over sum log-probability; ties resolve to the earlier
        expansion so decoding stays deterministic."""
        self.eval()
        if beam_size <= 1:
            return self.greedy_decode(src_ids, max_new)
        src = pad_batch([src_ids], self.pad_id)
        memory, src_pad = self.encode(src)
        beams: list[tuple[float, list[int], bool]] = [(0.0, [self.bos_id], False)]
        limit = min(max_new, self.max_tgt - 1)
        for _ in range(limit):
            if all(done for _, _, done in beams):
                break
            candidates: list[tuple[float, list[int], bool]] = []
            for score, seq, done in beams:
                if done:
                    candidates.append((score, seq, True))
                    continue
                tgt_in = torch.tensor([seq], dtype=torch.long)
                logits = self._decode_logits(memory, src_pad, tgt_in)
                logp = F.log_softmax(logits[0, -1], dim=-1)
                top = torch.topk(logp, beam_size)
                for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                    if tok == self.eos_id:
                        candidates.append((score + lp, seq, True))
                    else:
                        candidates.append((score + lp, seq + [tok], False))
            candidates.sort(key=lambda c: -c[0])
            beams = candidates[:beam_size]
        best = max(beams, key=lambda c: c[0])
        return best[1][1:]
