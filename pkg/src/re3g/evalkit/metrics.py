"""Text-overlap and retrieval metrics.

All pure functions. Generation metrics normalize first (lowercase, strip
punctuation, drop articles, whitespace split); corpus BLEU keeps articles.
"""

from __future__ import annotations

import math
import string
from collections import Counter

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLES = {"a", "an", "the"}


def normalize(text: str) -> list[str]:
    """Lowercase, strip punctuation, drop articles, split on whitespace."""
    stripped = text.lower().translate(_PUNCT_TABLE)
    return [t for t in stripped.split() if t not in _ARTICLES]


def _bleu_tokens(text: str) -> list[str]:
    # same pipeline as normalize() but articles stay (they carry n-gram signal)
    return text.lower().translate(_PUNCT_TABLE).split()


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, ref: str) -> float:
    """Multiset token overlap F1. Both empty -> 1.0, exactly one empty -> 0.0."""
    p, r = normalize(pred), normalize(ref)
    if not p and not r:
        return 1.0
    if not p or not r:
        return 0.0
    overlap = sum((Counter(p) & Counter(r)).values())
    return _f1(overlap / len(p), overlap / len(r))


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, ref: str) -> float:
    """Longest-common-subsequence F1 over normalized tokens."""
    p, r = normalize(pred), normalize(ref)
    if not p and not r:
        return 1.0
    if not p or not r:
        return 0.0
    lcs = _lcs_length(p, r)
    return _f1(lcs / len(p), lcs / len(r))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def s_bleu(preds: list[str], refs: list[str], eps: float = 1e-9) -> float:
    """Corpus-level BLEU-4 on a 0-100 scale.

    Geometric mean of modified n-gram precisions (n = 1..4) with additive-eps
    numerator smoothing when a clipped count is zero, and the exponential
    brevity penalty. One reference per prediction.
    """
    if len(preds) != len(refs):
        raise ValueError(f"{len(preds)} predictions vs {len(refs)} references")
    if not preds:
        return 0.0
    pred_toks = [_bleu_tokens(p) for p in preds]
    ref_toks = [_bleu_tokens(r) for r in refs]

    log_sum = 0.0
    orders = 0
    for n in range(1, 5):
        clipped = 0
        total = 0
        for pt, rt in zip(pred_toks, ref_toks):
            pn = _ngrams(pt, n)
            rn = _ngrams(rt, n)
            clipped += sum((pn & rn).values())
            total += sum(pn.values())
        if total == 0:
            continue  # corpus too short for this order; drop it from the mean
        numerator = clipped if clipped > 0 else eps
        log_sum += math.log(numerator / total)
        orders += 1
    if orders == 0:
        return 0.0

    pred_len = sum(len(t) for t in pred_toks)
    ref_len = sum(len(t) for t in ref_toks)
    bp = 1.0 if pred_len >= ref_len else math.exp(1 - ref_len / pred_len)
    return 100.0 * bp * math.exp(log_sum / orders)


def recall_at_k(ranked_ids: list[str], gold_ids, k: int) -> float:
    """1.0 if any gold id appears in the first k ranked ids, else 0.0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gold = set(gold_ids)
    return 1.0 if any(pid in gold for pid in ranked_ids[:k]) else 0.0


def mrr(ranked_ids: list[str], gold_ids) -> float:
    """Reciprocal rank of the first gold id (0.0 when absent)."""
    gold = set(gold_ids)
    for rank, pid in enumerate(ranked_ids, start=1):
        if pid in gold:
            return 1.0 / rank
    return 0.0


def grounding_em(pred_span: str, gold_span: str) -> float:
    return 1.0 if normalize(pred_span) == normalize(gold_span) else 0.0
