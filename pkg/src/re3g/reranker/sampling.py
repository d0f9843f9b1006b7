"""Dynamic negative sampling from per-example retriever candidate pools.

Pools (top passages per training example, retriever order) are generated once
per retriever snapshot and persisted as pools.jsonl. Negatives are re-drawn
from the pool at every epoch with an rng keyed on (global_seed, epoch,
example_id), so samples are reproducible yet differ across epochs.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)


def sample_negatives(
    pool: list[str],
    positive_ids: set[str] | frozenset[str],
    n: int,
    rng: random.Random,
) -> list[str]:
    """Uniform sample without replacement from the pool minus positives.

    Returns min(n, available) ids; an empty result (pool exhausted by
    positives) is logged, not raised.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    eligible = [pid for pid in pool if pid not in positive_ids]
    if not eligible:
        logger.warning("negative pool is empty after removing positives")
        return []
    return rng.sample(eligible, min(n, len(eligible)))


@dataclass
class NegativeSampler:
    pool_size: int = 100
    n_negatives: int = 30
    rng_seed: int = 13

    def rng_for(self, epoch: int, example_id: str) -> random.Random:
        return random.Random(f"{self.rng_seed}:{epoch}:{example_id}")

    def draw(self, pool: list[str], positive_ids, epoch: int, example_id: str) -> list[str]:
        return sample_negatives(
            pool[: self.pool_size],
            positive_ids,
            self.n_negatives,
            self.rng_for(epoch, example_id),
        )


def build_pools(
    retriever,
    index,
    examples,
    pool_size: int = 100,
    max_history_tokens: int = 128,
) -> dict[str, list[str]]:
    """Top-pool candidate ids per example, in retriever order."""
    from ..retriever.train import build_query

    pools = {}
    for ex in examples:
        qv = retriever.encode_context(build_query(ex, max_history_tokens))
        results = index.search(qv, min(pool_size, len(index)))
        pools[ex.example_id] = [r.passage_id for r in results]
    return pools


def write_pools(pools: dict[str, list[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for example_id, ids in pools.items():
            fh.write(
                json.dumps({"example_id": example_id, "candidate_passage_ids": ids})
                + "\n"
            )


def read_pools(path: str | Path) -> dict[str, list[str]]:
    pools = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                pools[rec["example_id"]] = rec["candidate_passage_ids"]
    return pools
