"""End-to-end desk-scale experiment on the bundled synthetic corpus.

One call trains the full pipeline for one seed (retriever phases 1-3,
reranker, two-stage generator) and measures: dev retrieval recall before and
after reranking, the phase-3 dev KL trajectory, and answer token-F1 for the
full pipeline versus the no-rerank ablation. The acceptance suite runs this
across seeds and takes medians; the CLI renders the same numbers as a report
with figures.
"""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .corpus import GroundedExample
from .evalkit import token_f1
from .generation import (
    GeneratorConfig,
    GeneratorModel,
    TaskTemplate,
    build_training_prompts,
    train_stage1_joint,
    train_stage2_per_task,
)
from .reranker import (
    CrossEncoder,
    CrossEncoderConfig,
    build_pools,
    rerank,
    rerank_recall,
    train_reranker,
)
from .retriever import (
    BiEncoder,
    BiEncoderConfig,
    build_index,
    evaluate_recall,
    train_phase1,
    train_phase2,
    train_phase3,
)
from .retriever.train import build_query
from .synth import SyntheticCorpus, generate_corpus
from .textproc import Vocab


@dataclass
class ExperimentSettings:
    corpus_seed: int = 7
    embed_dim: int = 64
    phase1_epochs: int = 90
    phase1_lr: float = 5e-3
    phase1_batch: int = 32
    reranker_epochs: int = 2
    reranker_lr: float = 2e-3
    n_negatives: int = 30
    pool_size: int = 100
    tau: float = 0.07
    phase2_epochs: int = 1
    phase2_lr: float = 1e-3
    phase2_k_train: int = 8
    phase3_epochs: int = 2
    phase3_lr: float = 5e-4
    phase3_k_train: int = 24
    stage1_epochs: int = 6
    stage1_lr: float = 1e-3
    stage2_lr: float = 5e-4
    k_rerank_out: int = 5
    history_max_tokens: int = 128
    max_prompt_tokens: int = 256
    max_answer_tokens: int = 24


@dataclass
class ExperimentResult:
    seed: int
    recall_retriever: dict[str, float]
    recall_rerank: dict[str, float]
    dev_kl: list[float]
    f1_full: float
    f1_no_rerank: float
    phase1_final_loss: float
    reranker_epoch_losses: list[float]
    stage1_final_loss: float
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _shortlist(
    retriever: BiEncoder,
    index,
    reranker_model: CrossEncoder | None,
    ex: GroundedExample,
    passages_by_id,
    settings: ExperimentSettings,
):
    query = build_query(ex, settings.history_max_tokens)
    results = index.search(
        retriever.encode_context(query), min(settings.pool_size, len(index))
    )
    if reranker_model is None:
        return [passages_by_id[r.passage_id] for r in results[: settings.k_rerank_out]]
    ranked = rerank(
        reranker_model, query, results, passages_by_id, top_n=settings.k_rerank_out
    )
    return [passages_by_id[c.passage_id] for c in ranked]


def _answer_f1(
    generator: GeneratorModel,
    retriever: BiEncoder,
    index,
    reranker_model: CrossEncoder | None,
    examples: list[GroundedExample],
    passages_by_id,
    settings: ExperimentSettings,
) -> float:
    total = 0.0
    for ex in examples:
        passages = _shortlist(
            retriever, index, reranker_model, ex, passages_by_id, settings
        )
        out = generator.generate(
            ex.context, [p.text for p in passages],
            TaskTemplate.GROUND_THEN_AGENT, greedy=True,
        )
        total += token_f1(out.answer or "", ex.gold_answer)
    return total / max(1, len(examples))


def run_experiment(
    seed: int,
    corpus: SyntheticCorpus | None = None,
    settings: ExperimentSettings = ExperimentSettings(),
) -> ExperimentResult:
    torch.set_num_threads(1)
    corpus = corpus or generate_corpus(seed=settings.corpus_seed)
    vocab = Vocab.build(corpus.all_texts())
    passages_by_id = corpus.passages_by_id
    stage_seconds: dict[str, float] = {}

    # retriever phase 1
    t0 = time.time()
    torch.manual_seed(seed)
    retriever = BiEncoder(
        vocab, BiEncoderConfig(d_model=settings.embed_dim, n_layers=0)
    )
    p1 = train_phase1(
        retriever, corpus.train_examples, corpus.passages,
        epochs=settings.phase1_epochs, batch_size=settings.phase1_batch,
        lr=settings.phase1_lr, seed=seed,
        max_history_tokens=settings.history_max_tokens,
    )
    index = build_index(corpus.passages, retriever)
    recall_retriever = evaluate_recall(
        retriever, index, corpus.dev_examples, ks=(1, 5, 10),
        max_history_tokens=settings.history_max_tokens,
    )
    stage_seconds["phase1"] = time.time() - t0

    # reranker on phase-1 pools
    t0 = time.time()
    pools = build_pools(
        retriever, index, corpus.train_examples, pool_size=settings.pool_size,
        max_history_tokens=settings.history_max_tokens,
    )
    torch.manual_seed(seed)
    reranker_model = CrossEncoder(
        vocab, CrossEncoderConfig(d_model=settings.embed_dim, n_layers=2)
    )
    reranker_model.warm_start_embeddings(retriever.context_encoder.tok_emb.weight)
    rr_metrics = train_reranker(
        reranker_model, corpus.train_examples, corpus.passages, pools,
        epochs=settings.reranker_epochs, lr=settings.reranker_lr,
        n_negatives=settings.n_negatives, pool_size=settings.pool_size,
        tau=settings.tau, seed=seed,
        max_history_tokens=settings.history_max_tokens,
    )
    recall_after = rerank_recall(
        reranker_model, retriever, index, corpus.dev_examples, passages_by_id,
        pool_size=settings.pool_size, ks=(1, 5),
        max_history_tokens=settings.history_max_tokens,
    )
    stage_seconds["reranker"] = time.time() - t0

    # phase 2: vanilla-generation guidance (context tower only)
    t0 = time.time()
    retriever_p2 = copy.deepcopy(retriever)
    vanilla = GeneratorModel(
        vocab, GeneratorConfig(d_model=48, n_layers=1, max_src=128, max_tgt=32)
    )
    train_phase2(
        retriever_p2, vanilla.net, corpus.train_examples, corpus.passages,
        k_train=settings.phase2_k_train, epochs=settings.phase2_epochs,
        lr=settings.phase2_lr, seed=seed,
        max_history_tokens=settings.history_max_tokens,
        max_answer_tokens=settings.max_answer_tokens,
    )
    stage_seconds["phase2"] = time.time() - t0

    # phase 3: KL distillation from the reranker
    t0 = time.time()
    p3 = train_phase3(
        retriever_p2, reranker_model, corpus.train_examples, corpus.passages,
        k_train=settings.phase3_k_train, epochs=settings.phase3_epochs,
        lr=settings.phase3_lr, seed=seed,
        dev_examples=corpus.dev_examples,
        max_history_tokens=settings.history_max_tokens,
    )
    stage_seconds["phase3"] = time.time() - t0

    # generator: stage 1 joint + stage 2 joint refinement
    t0 = time.time()
    shortlists = {
        ex.example_id: _shortlist(
            retriever, index, reranker_model, ex, passages_by_id, settings
        )
        for ex in corpus.train_examples
    }
    prompts = build_training_prompts(
        corpus.train_examples, shortlists, passages_by_id,
        max_history_tokens=settings.history_max_tokens,
        max_prompt_tokens=settings.max_prompt_tokens, seed=seed,
    )
    torch.manual_seed(seed)
    generator = GeneratorModel(vocab, GeneratorConfig())
    s1 = train_stage1_joint(
        generator, prompts, epochs=settings.stage1_epochs,
        lr=settings.stage1_lr, seed=seed,
    )
    train_stage2_per_task(
        generator, prompts, TaskTemplate.GROUND_THEN_AGENT,
        lr=settings.stage2_lr, seed=seed,
    )
    stage_seconds["generator"] = time.time() - t0

    # ablation comparison on dev (greedy decoding)
    t0 = time.time()
    f1_full = _answer_f1(
        generator, retriever, index, reranker_model, corpus.dev_examples,
        passages_by_id, settings,
    )
    f1_no_rerank = _answer_f1(
        generator, retriever, index, None, corpus.dev_examples,
        passages_by_id, settings,
    )
    stage_seconds["ablation_eval"] = time.time() - t0

    return ExperimentResult(
        seed=seed,
        recall_retriever=recall_retriever,
        recall_rerank=recall_after,
        dev_kl=p3["dev_kl"],
        f1_full=f1_full,
        f1_no_rerank=f1_no_rerank,
        phase1_final_loss=p1["step_losses"][-1],
        reranker_epoch_losses=rr_metrics["epoch_losses"],
        stage1_final_loss=s1["step_losses"][-1],
        stage_seconds=stage_seconds,
    )


def median(values: list[float]) -> float:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def write_experiment_report(
    results: list[ExperimentResult], out_dir: str | Path
) -> dict[str, Path]:
    """Persist per-seed rows (CSV + JSON) and summary figures."""
    from .reporting import save_series

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["json"] = out_dir / "experiment.json"
    paths["json"].write_text(
        json.dumps([r.to_dict() for r in results], indent=2)
    )

    paths["csv"] = out_dir / "experiment.csv"
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "recall@1", "recall@5", "rerank_recall@1", "rerank_recall@5",
             "f1_full", "f1_no_rerank", "kl_start", "kl_end"]
        )
        for r in results:
            writer.writerow(
                [r.seed, r.recall_retriever["recall@1"], r.recall_retriever["recall@5"],
                 r.recall_rerank["rerank_recall@1"], r.recall_rerank["rerank_recall@5"],
                 r.f1_full, r.f1_no_rerank, r.dev_kl[0], r.dev_kl[-1]]
            )

    paths["kl_png"] = save_series(
        {f"seed {r.seed}": r.dev_kl for r in results},
        out_dir / "figures" / "phase3_kl.png",
        xlabel="epoch boundary", ylabel="dev KL",
        title="reranker-to-retriever distillation",
    )
    paths["recall_png"] = save_series(
        {
            "retriever r@1": [r.recall_retriever["recall@1"] for r in results],
            "reranked r@1": [r.recall_rerank["rerank_recall@1"] for r in results],
        },
        out_dir / "figures" / "recall_gain.png",
        xlabel="seed index", ylabel="recall@1", title="reranking gain",
    )
    return paths
