"""Three-phase retriever training.

Phase 1 trains both towers contrastively on (context, positives, negatives)
triples with in-batch negatives. Phase 2 finetunes the context encoder only,
guided by a throwaway response generator through the answer marginal over
retrieved candidates. Phase 3 distills the reranker's candidate distribution
into the retriever via KL, rebuilding the index at every epoch boundary.
"""

from __future__ import annotations

import json
import logging
import random
from pathlib import Path

import torch

from ..corpus import GroundedExample, Passage, serialize_history
from ..models import Seq2SeqModel, pad_batch
from .biencoder import BiEncoder
from .index import DenseIndex, build_index, next_snapshot_version
from .losses import contrastive_nll, distillation_kl, marginal_nll

logger = logging.getLogger(__name__)


def checkpoint_path(run_dir: str | Path, phase: int) -> Path:
    return Path(run_dir) / f"re3g.retriever.phase{phase}.ckpt"


def build_query(example: GroundedExample, max_history_tokens: int = 128) -> str:
    return serialize_history(example.context, max_history_tokens)


def _pick_positive(ex: GroundedExample, rng: random.Random) -> str:
    return rng.choice(sorted(ex.positive_passage_ids))


def phase1_contrastive_loss(
    model: BiEncoder,
    batch: list[GroundedExample],
    passages_by_id: dict[str, Passage],
    negatives_mode: str = "in_batch+hard",
    rng: random.Random | None = None,
    max_history_tokens: int = 128,
) -> tuple[torch.Tensor, int]:
    """Sum of per-positive softmax NLL terms over a batch.

    Negatives per example are the other in-batch positives plus every hard
    negative in the batch, with any passage that is also a positive of the
    example masked out. Returns (loss_sum, number_of_terms).
    """
    if negatives_mode not in ("in_batch", "hard", "in_batch+hard"):
        raise ValueError(f"unknown negatives_mode {negatives_mode!r}")
    rng = rng or random.Random(0)
    for ex in batch:
        if not ex.positive_passage_ids:
            raise ValueError(f"example {ex.example_id} has no positive passage")

    pos_ids = [_pick_positive(ex, rng) for ex in batch]
    hard_ids: list[str] = []
    if "hard" in negatives_mode:
        for ex in batch:
            hard_ids.extend(
                pid for pid in sorted(ex.hard_negative_ids) if pid in passages_by_id
            )

    queries = [build_query(ex, max_history_tokens) for ex in batch]
    all_ids = pos_ids + hard_ids
    ctx_vecs = model.context_vectors(queries)
    psg_vecs = model.passage_vectors([passages_by_id[pid].text for pid in all_ids])
    scores = ctx_vecs @ psg_vecs.T  # [B, B+H]

    losses = []
    for i, ex in enumerate(batch):
        neg_cols = []
        for j, pid in enumerate(all_ids):
            if j == i:
                continue
            if j < len(batch) and "in_batch" not in negatives_mode:
                continue
            if pid in ex.positive_passage_ids:
                continue  # false negative: same passage is relevant here too
            neg_cols.append(j)
        if not neg_cols:
            continue
        losses.append(contrastive_nll(scores[i, i], scores[i, neg_cols]))
    if not losses:
        raise ValueError("batch produced no contrastive terms")
    return torch.stack(losses).sum(), len(losses)


def evaluate_recall(
    model: BiEncoder,
    index: DenseIndex,
    examples: list[GroundedExample],
    ks: tuple[int, ...] = (1, 5, 10),
    max_history_tokens: int = 128,
) -> dict[str, float]:
    """Fraction of examples with a positive passage in the top-k."""
    hits = {k: 0 for k in ks}
    model.eval()
    for ex in examples:
        qv = model.encode_context(build_query(ex, max_history_tokens))
        results = index.search(qv, max(ks))
        for k in ks:
            got = {r.passage_id for r in results[:k]}
            if got & ex.positive_passage_ids:
                hits[k] += 1
    n = max(1, len(examples))
    return {f"recall@{k}": hits[k] / n for k in ks}


def train_phase1(
    model: BiEncoder,
    train_examples: list[GroundedExample],
    passages: list[Passage],
    *,
    epochs: int = 10,
    steps: int | None = None,
    batch_size: int = 32,
    lr: float = 2e-3,
    seed: int = 13,
    dev_examples: list[GroundedExample] | None = None,
    negatives_mode: str = "in_batch+hard",
    max_history_tokens: int = 128,
) -> dict:
    """Contrastive training of both towers. Returns a metrics dict with
    per-step losses and per-epoch dev recall."""
    torch.manual_seed(seed)
    rng = random.Random(seed)
    passages_by_id = {p.passage_id: p for p in passages}
    opt = torch.optim.Adam(model.parameters(), lr=lr)

    step_losses: list[float] = []
    dev_recall: list[dict[str, float]] = []
    total_steps = 0
    model.train()
    for epoch in range(epochs):
        order = list(train_examples)
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            if len(batch) < 2:
                continue
            loss_sum, n_terms = phase1_contrastive_loss(
                model, batch, passages_by_id, negatives_mode, rng, max_history_tokens
            )
            loss = loss_sum / n_terms
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_losses.append(loss.item())
            total_steps += 1
            if steps is not None and total_steps >= steps:
                break
        if dev_examples is not None:
            index = build_index(passages, model)
            dev_recall.append(
                evaluate_recall(model, index, dev_examples, max_history_tokens=max_history_tokens)
            )
            model.train()
        if steps is not None and total_steps >= steps:
            break
    model.untie_embeddings()
    model.eval()
    return {"phase": 1, "step_losses": step_losses, "dev_recall": dev_recall}


def train_phase2(
    model: BiEncoder,
    generator: Seq2SeqModel,
    train_examples: list[GroundedExample],
    passages: list[Passage],
    *,
    k_train: int = 24,
    epochs: int = 1,
    batch_size: int = 8,
    lr: float = 1e-3,
    seed: int = 13,
    max_history_tokens: int = 128,
    max_answer_tokens: int = 32,
) -> dict:
    """Marginal-likelihood finetuning of the context encoder with a vanilla
    generator. The passage encoder and the candidate index stay frozen for
    the whole run."""
    torch.manual_seed(seed)
    rng = random.Random(seed)
    model.untie_embeddings()
    model.zero_grad(set_to_none=True)  # drop any leftover phase-1 gradients
    model.passage_encoder.requires_grad_(False)
    index = build_index(passages, model)  # frozen snapshot for the run
    matrix = torch.from_numpy(index.matrix.copy())
    passages_by_id = {p.passage_id: p for p in passages}

    if k_train > len(index):
        logger.warning(
            "k_train=%d exceeds index size %d; clipping", k_train, len(index)
        )
        k_train = len(index)

    vocab = model.vocab
    params = list(model.context_encoder.parameters()) + list(generator.parameters())
    opt = torch.optim.Adam(params, lr=lr)

    def gen_src(query: str, passage_text: str) -> list[int]:
        ids = vocab.encode(query, max_history_tokens) + [vocab.sep_id]
        ids += vocab.encode(passage_text)
        return ids[: generator.max_src]

    step_losses: list[float] = []
    model.train()
    generator.train()
    for _ in range(epochs):
        order = [ex for ex in train_examples if ex.gold_answer]
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            queries = [build_query(ex, max_history_tokens) for ex in batch]
            ctx_vecs = model.context_vectors(queries)
            with torch.no_grad():
                top = torch.topk(ctx_vecs.detach() @ matrix.T, k_train, dim=1)
            losses = []
            for i, ex in enumerate(batch):
                cand_rows = top.indices[i]
                ret_scores = ctx_vecs[i] @ matrix[cand_rows].T
                srcs, tgts = [], []
                for row in cand_rows.tolist():
                    text = passages_by_id[index.passage_ids[row]].text
                    srcs.append(gen_src(queries[i], text))
                    tgts.append(vocab.encode(ex.gold_answer, max_answer_tokens))
                gen_lp = generator.sequence_log_prob(
                    pad_batch(srcs, vocab.pad_id), pad_batch(tgts, vocab.pad_id)
                )
                losses.append(marginal_nll(ret_scores, gen_lp))
            loss = torch.stack(losses).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_losses.append(loss.item())
    model.passage_encoder.requires_grad_(True)
    model.eval()
    generator.eval()
    return {"phase": 2, "step_losses": step_losses, "snapshot_version": index.snapshot_version}


def _mean_dev_kl(
    model: BiEncoder,
    reranker,
    index: DenseIndex,
    examples: list[GroundedExample],
    passages_by_id: dict[str, Passage],
    k: int,
    direction: str,
    max_history_tokens: int,
) -> float:
    total = 0.0
    for ex in examples:
        query = build_query(ex, max_history_tokens)
        results = index.search(model.encode_context(query), k)
        texts = [passages_by_id[r.passage_id].text for r in results]
        with torch.no_grad():
            student = model.context_vectors([query])[0] @ model.passage_vectors(texts).T
            teacher = reranker.pair_logits(texts, query)
            total += float(distillation_kl(teacher, student, direction))
    return total / max(1, len(examples))


def train_phase3(
    model: BiEncoder,
    reranker,
    train_examples: list[GroundedExample],
    passages: list[Passage],
    *,
    k_train: int = 24,
    epochs: int = 2,
    batch_size: int = 8,
    lr: float = 5e-4,
    seed: int = 13,
    kl_direction: str = "teacher_student",
    dev_examples: list[GroundedExample] | None = None,
    max_history_tokens: int = 128,
    index_dir: str | Path | None = None,
) -> dict:
    """Distill the reranker's candidate distribution into both towers.

    The index is rebuilt at every epoch boundary (the passage encoder moves);
    within an epoch candidates come from the stale snapshot, which is accepted
    at desk scale. Logged dev KL is measured on the freshly rebuilt index at
    each boundary, starting before any update.
    """
    torch.manual_seed(seed)
    rng = random.Random(seed)
    model.untie_embeddings()
    passages_by_id = {p.passage_id: p for p in passages}
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    k_train = min(k_train, len(passages))

    version = next_snapshot_version(index_dir) if index_dir else 1
    index = build_index(passages, model, snapshot_version=version)

    dev_kl: list[float] = []

    def log_dev_kl():
        if dev_examples:
            dev_kl.append(
                _mean_dev_kl(
                    model, reranker, index, dev_examples, passages_by_id,
                    k_train, kl_direction, max_history_tokens,
                )
            )

    log_dev_kl()
    step_losses: list[float] = []
    for _ in range(epochs):
        order = list(train_examples)
        rng.shuffle(order)
        model.train()
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            queries = [build_query(ex, max_history_tokens) for ex in batch]
            losses = []
            for query in queries:
                with torch.no_grad():
                    model.eval()
                    results = index.search(model.encode_context(query), k_train)
                    model.train()
                texts = [passages_by_id[r.passage_id].text for r in results]
                student = (
                    model.context_vectors([query])[0] @ model.passage_vectors(texts).T
                )
                with torch.no_grad():
                    teacher = reranker.pair_logits(texts, query)
                losses.append(distillation_kl(teacher, student, kl_direction))
            loss = torch.stack(losses).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_losses.append(loss.item())
        model.eval()
        version += 1
        index = build_index(passages, model, snapshot_version=version)
        if index_dir:
            index.save(index_dir)
        log_dev_kl()
    model.eval()
    return {
        "phase": 3,
        "step_losses": step_losses,
        "dev_kl": dev_kl,
        "snapshot_version": index.snapshot_version,
    }


def save_phase(
    model: BiEncoder, run_dir: str | Path, phase: int, metrics: dict, config_echo: dict
) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = checkpoint_path(run_dir, phase)
    model.save(path, phase=phase, extra={"config_echo": config_echo})
    sidecar = path.with_suffix(".metrics.json")
    sidecar.write_text(json.dumps({**metrics, "config_echo": config_echo}, indent=2))
    return path


def require_phase_checkpoint(run_dir: str | Path, phase: int) -> Path:
    path = checkpoint_path(run_dir, phase)
    if not path.exists():
        raise FileNotFoundError(
            f"phase {phase + 1} training requires the phase {phase} checkpoint "
            f"at {path}; run the earlier phase first"
        )
    return path
