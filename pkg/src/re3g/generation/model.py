"""Generator wrapper: seq2seq model + vocabulary + decoding configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from ..corpus import DialogueContext
from ..models import Seq2SeqModel
from ..textproc import Vocab
from .templates import GenerationOutput, TaskTemplate, build_prompt, parse_output


@dataclass(frozen=True)
class GeneratorConfig:
    d_model: int = 96
    n_heads: int = 4
    n_layers: int = 2
    max_src: int = 352
    max_tgt: int = 96
    dropout: float = 0.1
    beam_size: int = 4
    max_target_tokens: int = 128
    max_history_tokens: int = 128
    max_prompt_tokens: int = 256


class GeneratorModel:
    def __init__(self, vocab: Vocab, config: GeneratorConfig = GeneratorConfig()):
        self.vocab = vocab
        self.config = config
        self.net = Seq2SeqModel(
            vocab_size=len(vocab),
            pad_id=vocab.pad_id,
            bos_id=vocab.bos_id,
            eos_id=vocab.eos_id,
            d_model=config.d_model,
            n_heads=config.n_heads,
            n_layers=config.n_layers,
            max_src=config.max_src,
            max_tgt=config.max_tgt,
            dropout=config.dropout,
        )

    def decode_text(self, prompt: str, greedy: bool = False) -> str:
        src_ids = self.vocab.encode(prompt, self.config.max_src)
        if not src_ids:
            raise ValueError("prompt encoded to zero tokens")
        limit = min(self.config.max_target_tokens, self.config.max_tgt - 1)
        if greedy or self.config.beam_size <= 1:
            out = self.net.greedy_decode(src_ids, max_new=limit)
        else:
            out = self.net.beam_decode(
                src_ids, beam_size=self.config.beam_size, max_new=limit
            )
        return self.vocab.decode(out)

    def generate(
        self,
        ctx: DialogueContext,
        passage_texts: list[str],
        task: TaskTemplate,
        greedy: bool = False,
    ) -> GenerationOutput:
        prompt = build_prompt(
            task,
            ctx,
            passage_texts,
            max_history_tokens=self.config.max_history_tokens,
            max_prompt_tokens=self.config.max_prompt_tokens,
        )
        try:
            raw = self.decode_text(prompt, greedy=greedy)
        except Exception as exc:
            raise RuntimeError(f"decoding failed for prompt {prompt!r}") from exc
        return parse_output(raw, task)

    def save(self, path: str | Path, stage: str, extra: dict | None = None) -> None:
        torch.save(
            {
                "kind": "generator",
                "stage": stage,
                "vocab": self.vocab.tokens,
                "config": asdict(self.config),
                "state_dict": self.net.state_dict(),
                "extra": extra or {},
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> tuple["GeneratorModel", str]:
        blob = torch.load(path, weights_only=False)
        if blob.get("kind") != "generator":
            raise ValueError(f"{path} is not a generator checkpoint")
        model = cls(Vocab(blob["vocab"]), GeneratorConfig(**blob["config"]))
        model.net.load_state_dict(blob["state_dict"])
        model.net.eval()
        return model, blob["stage"]
