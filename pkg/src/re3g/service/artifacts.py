"""Run-directory plumbing: where every artifact lives and how the pipeline
is assembled from checkpoints and the index."""

from __future__ import annotations

import logging
import shutil
from pathlib import Path

from ..corpus import (
    GroundedExample,
    Passage,
    StructuralPolicy,
    WindowPolicy,
    ingest_dialogues,
    ingest_documents,
    read_passages,
    split_corpus,
    validate_gold_spans,
    write_passages,
)
from ..generation import GeneratorConfig, GeneratorModel, STAGE_CHECKPOINTS
from ..reranker import CHECKPOINT_NAME as RERANKER_CKPT
from ..reranker.model import CrossEncoder, CrossEncoderConfig
from ..retriever import BiEncoder, BiEncoderConfig, DenseIndex, checkpoint_path
from ..textproc import Vocab
from .config import PipelineConfig
from .pipeline import Pipeline

logger = logging.getLogger(__name__)

DOCUMENTS = "documents.jsonl"
DIALOGUES = "dialogues.jsonl"
PASSAGES = "passages.jsonl"
VOCAB = "vocab.json"
INDEX_DIR = "index"
POOLS = "pools.jsonl"
PROMPTS = "prompts.jsonl"


def split_policy_from(config: PipelineConfig):
    if config.split_policy == "structural":
        return StructuralPolicy()
    if config.split_policy == "window":
        return WindowPolicy(config.window_width, config.window_stride)
    raise ValueError(f"unknown split policy {config.split_policy!r}")


def ingest_into_run(run_dir: Path, docs_path: Path, dialogues_path: Path | None) -> dict:
    """Validate the raw files and copy them into the run directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    docs = ingest_documents(docs_path)
    shutil.copyfile(docs_path, run_dir / DOCUMENTS)
    counts = {"documents": len(docs), "examples": 0}
    if dialogues_path is not None:
        examples = ingest_dialogues(dialogues_path)
        shutil.copyfile(dialogues_path, run_dir / DIALOGUES)
        counts["examples"] = len(examples)
    return counts


def split_into_run(run_dir: Path, config: PipelineConfig) -> list[Passage]:
    docs = ingest_documents(run_dir / DOCUMENTS)
    passages = split_corpus(docs, split_policy_from(config))
    write_passages(passages, run_dir / PASSAGES)

    texts = [p.text for p in passages] + [d.title for d in docs]
    dialogues = run_dir / DIALOGUES
    if dialogues.exists():
        for ex in ingest_dialogues(dialogues):
            texts.extend(t.text for t in ex.context.turns)
            texts.append(ex.gold_answer)
            texts.append(ex.gold_span)
    Vocab.build(texts).save(run_dir / VOCAB)

    examples = ingest_dialogues(dialogues) if dialogues.exists() else []
    if examples:
        bad = validate_gold_spans(examples, {p.passage_id: p for p in passages})
        if bad:
            logger.warning("%d gold spans not found in positive passages", bad)
    return passages


def load_corpus(run_dir: Path) -> tuple[list[Passage], list[GroundedExample]]:
    passages = read_passages(run_dir / PASSAGES)
    dialogues = run_dir / DIALOGUES
    examples = ingest_dialogues(dialogues) if dialogues.exists() else []
    return passages, examples


def train_dev_split(
    examples: list[GroundedExample], dev_count: int
) -> tuple[list[GroundedExample], list[GroundedExample]]:
    """Last dev_count examples (file order) are the dev set."""
    if dev_count <= 0 or dev_count >= len(examples):
        return examples, []
    return examples[:-dev_count], examples[-dev_count:]


def load_vocab(run_dir: Path) -> Vocab:
    path = run_dir / VOCAB
    if not path.exists():
        raise FileNotFoundError(f"no vocabulary at {path}; run `split` first")
    return Vocab.load(path)


def new_biencoder(vocab: Vocab, config: PipelineConfig) -> BiEncoder:
    return BiEncoder(
        vocab,
        BiEncoderConfig(
            d_model=config.embed_dim,
            n_layers=config.retriever_layers,
            max_context_tokens=config.retriever_context_tokens,
            max_passage_tokens=config.retriever_passage_tokens,
        ),
    )


def new_cross_encoder(vocab: Vocab, config: PipelineConfig) -> CrossEncoder:
    return CrossEncoder(
        vocab,
        CrossEncoderConfig(
            d_model=config.embed_dim,
            n_layers=config.reranker_layers,
            max_joint_tokens=config.reranker_joint_tokens,
        ),
    )


def new_generator(vocab: Vocab, config: PipelineConfig) -> GeneratorModel:
    return GeneratorModel(
        vocab,
        GeneratorConfig(
            d_model=config.generator_dim,
            n_layers=config.generator_layers,
            max_src=config.generator_src_tokens,
            max_tgt=config.generator_tgt_tokens,
            beam_size=config.beam_size,
            max_target_tokens=config.max_target_tokens,
            max_history_tokens=config.history_max_tokens,
            max_prompt_tokens=config.max_prompt_tokens,
        ),
    )


def latest_retriever(run_dir: Path) -> tuple[BiEncoder, int]:
    for phase in (3, 2, 1):
        path = checkpoint_path(run_dir, phase)
        if path.exists():
            return BiEncoder.load(path)
    raise FileNotFoundError(
        f"no retriever checkpoint under {run_dir}; run `train-retriever --phase 1`"
    )


def serving_generator(run_dir: Path, config: PipelineConfig) -> GeneratorModel:
    order = (
        ["stage2.joint", "stage1"]
        if config.generator_serve == "stage2"
        else ["stage1"]
    )
    for stage in order:
        path = run_dir / STAGE_CHECKPOINTS[stage]
        if path.exists():
            model, _ = GeneratorModel.load(path)
            return model
    raise FileNotFoundError(
        f"no generator checkpoint under {run_dir}; run `train-generator`"
    )


def load_pipeline(run_dir: str | Path, config: PipelineConfig) -> Pipeline:
    run_dir = Path(run_dir)
    passages, _ = load_corpus(run_dir)
    index = DenseIndex.load(run_dir / INDEX_DIR)
    retriever, phase = latest_retriever(run_dir)
    if index.encoder_weight_hash and index.encoder_weight_hash != retriever.weight_hash():
        logger.warning(
            "index snapshot was built from different retriever weights; "
            "rebuild with `index` (have phase %d)", phase,
        )
    reranker = None
    reranker_path = run_dir / RERANKER_CKPT
    if reranker_path.exists():
        reranker = CrossEncoder.load(reranker_path)
    generator = serving_generator(run_dir, config)
    return Pipeline(
        passages=passages,
        retriever=retriever,
        index=index,
        generator=generator,
        config=config,
        reranker=reranker,
    )
