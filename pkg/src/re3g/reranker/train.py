"""Reranker training loop: per-epoch dynamic negatives + InfoNCE."""

from __future__ import annotations

import json
import random
from pathlib import Path

import torch

from ..corpus import GroundedExample, Passage
from ..retriever.train import build_query
from .losses import infonce_multi_positive
from .model import CrossEncoder, rerank
from .sampling import NegativeSampler

CHECKPOINT_NAME = "re3g.reranker.ckpt"


def rerank_recall(
    model: CrossEncoder,
    retriever,
    index,
    examples: list[GroundedExample],
    passages_by_id: dict[str, Passage],
    pool_size: int = 100,
    ks: tuple[int, ...] = (1, 5),
    max_history_tokens: int = 128,
) -> dict[str, float]:
    """Recall@k measured after reranking the retriever's top pool."""
    hits = {k: 0 for k in ks}
    for ex in examples:
        query = build_query(ex, max_history_tokens)
        results = index.search(
            retriever.encode_context(query), min(pool_size, len(index))
        )
        ranked = rerank(model, query, results, passages_by_id, top_n=max(ks))
        for k in ks:
            got = {c.passage_id for c in ranked[:k]}
            if got & ex.positive_passage_ids:
                hits[k] += 1
    n = max(1, len(examples))
    return {f"rerank_recall@{k}": hits[k] / n for k in ks}


def train_reranker(
    model: CrossEncoder,
    train_examples: list[GroundedExample],
    passages: list[Passage],
    pools: dict[str, list[str]],
    *,
    epochs: int = 4,
    lr: float = 2e-3,
    n_negatives: int = 30,
    pool_size: int = 100,
    tau: float = 0.07,
    on_logits: bool = True,
    seed: int = 13,
    group_size: int = 4,
    max_history_tokens: int = 128,
    dev_examples: list[GroundedExample] | None = None,
    retriever=None,
    index=None,
) -> dict:
    """InfoNCE training with negatives re-drawn from the retriever pools at
    every epoch. Returns metrics including the per-epoch negative draws so
    the dynamic-sampling behaviour is auditable."""
    missing = [ex.example_id for ex in train_examples if ex.example_id not in pools]
    if missing:
        raise ValueError(
            f"missing retriever pools for {len(missing)} examples "
            f"(first: {missing[0]}); build pools from the phase-1 retriever first"
        )
    torch.manual_seed(seed)
    shuffle_rng = random.Random(seed)
    sampler = NegativeSampler(
        pool_size=pool_size, n_negatives=n_negatives, rng_seed=seed
    )
    passages_by_id = {p.passage_id: p for p in passages}
    opt = torch.optim.Adam(model.parameters(), lr=lr)

    epoch_losses: list[float] = []
    negatives_log: list[dict[str, list[str]]] = []
    dev_metrics: list[dict[str, float]] = []

    for epoch in range(epochs):
        drawn: dict[str, list[str]] = {}
        order = list(train_examples)
        shuffle_rng.shuffle(order)
        model.train()
        total, terms = 0.0, 0
        for lo in range(0, len(order), group_size):
            group = order[lo : lo + group_size]
            losses = []
            for ex in group:
                negs = sampler.draw(
                    pools[ex.example_id], ex.positive_passage_ids, epoch, ex.example_id
                )
                drawn[ex.example_id] = negs
                if not negs:
                    continue
                query = build_query(ex, max_history_tokens)
                pos_ids = sorted(
                    pid for pid in ex.positive_passage_ids if pid in passages_by_id
                )
                texts = [passages_by_id[pid].text for pid in pos_ids + negs]
                logits = model.pair_logits(texts, query)
                scores = logits if on_logits else torch.sigmoid(logits)
                losses.append(
                    infonce_multi_positive(
                        scores[: len(pos_ids)], scores[len(pos_ids) :], tau
                    )
                )
            if not losses:
                continue
            loss = torch.stack(losses).sum() / len(losses)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(losses)
            terms += len(losses)
        epoch_losses.append(total / max(1, terms))
        negatives_log.append(drawn)
        if dev_examples is not None and retriever is not None and index is not None:
            model.eval()
            dev_metrics.append(
                rerank_recall(
                    model, retriever, index, dev_examples, passages_by_id,
                    pool_size=pool_size, max_history_tokens=max_history_tokens,
                )
            )
    model.eval()
    return {
        "epoch_losses": epoch_losses,
        "negatives_per_epoch": negatives_log,
        "dev_metrics": dev_metrics,
    }


def resample_fraction(negatives_log: list[dict[str, list[str]]]) -> float:
    """Fraction of examples whose negative set changed between the first two
    logged epochs."""
    if len(negatives_log) < 2:
        return 0.0
    first, second = negatives_log[0], negatives_log[1]
    ids = [k for k in first if k in second]
    changed = sum(1 for k in ids if set(first[k]) != set(second[k]))
    return changed / max(1, len(ids))


def save_reranker(
    model: CrossEncoder, run_dir: str | Path, metrics: dict, config_echo: dict
) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / CHECKPOINT_NAME
    model.save(path, extra={"config_echo": config_echo})
    slim = {
        "epoch_losses": metrics["epoch_losses"],
        "dev_metrics": metrics["dev_metrics"],
        "resample_fraction": resample_fraction(metrics["negatives_per_epoch"]),
        "config_echo": config_echo,
    }
    path.with_suffix(".metrics.json").write_text(json.dumps(slim, indent=2))
    return path
