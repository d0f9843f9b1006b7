"""Word-level tokenizer and vocabulary shared by every model.

The role and task markers (⟨user⟩, ⟨agent⟩, ⟨grounding⟩) are reserved single
tokens: the tokenizer never fragments them and every vocabulary registers
them up front, so templates survive the round trip through any model.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

USER_MARK = "⟨user⟩"
AGENT_MARK = "⟨agent⟩"
GROUND_MARK = "⟨grounding⟩"

PAD, UNK, BOS, EOS, SEP = "<pad>", "<unk>", "<bos>", "<eos>", "<sep>"

SPECIAL_TOKENS = (PAD, UNK, BOS, EOS, SEP, USER_MARK, AGENT_MARK, GROUND_MARK)

# markers first so ⟨user⟩ stays atomic; then words, then single punctuation
_TOKEN_RE = re.compile(r"⟨[a-z]+⟩|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Frozen token-to-id table with reserved specials at the front."""

    def __init__(self, tokens: list[str]):
        for i, tok in enumerate(SPECIAL_TOKENS):
            if tokens[i] != tok:
                raise ValueError(f"token {i} must be {tok!r}, got {tokens[i]!r}")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def sep_id(self) -> int:
        return self.index[SEP]

    @classmethod
    def build(cls, texts, min_count: int = 1) -> "Vocab":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        words = sorted(
            t for t, c in counts.items()
            if c >= min_count and t not in SPECIAL_TOKENS
        )
        return cls(list(SPECIAL_TOKENS) + words)

    def encode(self, text: str, max_tokens: int | None = None) -> list[int]:
        unk = self.index[UNK]
        ids = [self.index.get(t, unk) for t in tokenize(text)]
        if max_tokens is not None:
            ids = ids[:max_tokens]
        return ids

    def decode(self, ids) -> str:
        """Ids back to text; single-character punctuation reattaches to the
        preceding token so simple sentences round-trip (lowercased)."""
        skip = {self.index[PAD], self.index[BOS], self.index[EOS]}
        parts: list[str] = []
        for i in ids:
            if i in skip:
                continue
            tok = self.tokens[i]
            if parts and len(tok) == 1 and not (tok.isalnum() or tok == "_"):
                parts[-1] += tok
            else:
                parts.append(tok)
        return " ".join(parts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.tokens, ensure_ascii=False))

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls(json.loads(Path(path).read_text()))
