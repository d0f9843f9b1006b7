"""Command line interface: corpus preparation, training, evaluation, serving.

Every command reads the pipeline config from an optional TOML file plus flag
overrides and works inside a run directory (content-addressed by config hash
unless given explicitly; RE3G_RUN_DIR moves the default base).
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import torch

from ..corpus import ingest_dialogues
from ..evalkit import evaluate_run, render_markdown, write_report
from ..generation import (
    STAGE2_TAG,
    STAGE_CHECKPOINTS,
    TaskTemplate,
    build_training_prompts,
    require_stage1,
    save_generator,
    train_stage1_joint,
    train_stage2_per_task,
    write_prompts,
)
from ..generation.model import GeneratorModel
from ..reporting import save_loss_curve, save_series
from ..reranker import (
    build_pools,
    read_pools,
    rerank,
    save_reranker,
    train_reranker,
    write_pools,
)
from ..reranker.model import CrossEncoder
from ..retriever import (
    BiEncoder,
    DenseIndex,
    build_index,
    checkpoint_path,
    next_snapshot_version,
    require_phase_checkpoint,
    save_phase,
    train_phase1,
    train_phase2,
    train_phase3,
)
from . import artifacts
from .config import PipelineConfig, resolve_run_dir, write_config_echo
from .pipeline import SessionStore

torch.set_num_threads(1)


def _config(config_file: str | None, **overrides) -> PipelineConfig:
    clean = {k: v for k, v in overrides.items() if v is not None}
    if config_file:
        return PipelineConfig.from_toml(config_file, **clean)
    return PipelineConfig().with_overrides(**clean)


def _run_dir(run_dir: str | None, config: PipelineConfig) -> Path:
    path = resolve_run_dir(run_dir, config)
    path.mkdir(parents=True, exist_ok=True)
    write_config_echo(path, config)
    return path


run_dir_option = click.option("--run-dir", default=None, help="run directory (default: runs/<config hash>)")
config_option = click.option("--config", "config_file", default=None, type=click.Path(exists=True), help="TOML config file")
seed_option = click.option("--seed", type=int, default=None, help="override random seed")


@click.group()
def main():
    """Coarse-to-fine document-grounded dialogue pipeline."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--dialogues", "n_dialogues", type=int, default=300, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
def synth(out, n_dialogues, seed):
    """Emit the bundled synthetic corpus (documents + dialogues)."""
    from ..synth import generate_corpus, write_corpus

    corpus = generate_corpus(n_dialogues=n_dialogues, seed=seed)
    paths = write_corpus(corpus, out)
    click.echo(
        f"wrote {len(corpus.documents)} documents and "
        f"{len(corpus.train_examples) + len(corpus.dev_examples)} dialogues "
        f"under {out}"
    )
    for name, path in paths.items():
        click.echo(f"  {name}: {path}")


@main.command()
@click.option("--docs", required=True, type=click.Path(exists=True))
@click.option("--dialogues", type=click.Path(exists=True), default=None)
@run_dir_option
@config_option
def ingest(docs, dialogues, run_dir, config_file):
    """Validate and stage raw documents (and dialogues) into the run dir."""
    config = _config(config_file)
    rd = _run_dir(run_dir, config)
    counts = artifacts.ingest_into_run(rd, Path(docs), Path(dialogues) if dialogues else None)
    click.echo(f"ingested {counts['documents']} documents, {counts['examples']} grounded examples -> {rd}")


@main.command()
@run_dir_option
@config_option
@click.option("--policy", type=click.Choice(["structural", "window"]), default=None)
def split(run_dir, config_file, policy):
    """Split staged documents into passages and build the vocabulary."""
    config = _config(config_file, split_policy=policy)
    rd = _run_dir(run_dir, config)
    passages = artifacts.split_into_run(rd, config)
    click.echo(f"wrote {len(passages)} passages and vocab -> {rd}")


@main.command()
@run_dir_option
@config_option
def index(run_dir, config_file):
    """Encode all passages with the latest retriever and persist the index."""
    config = _config(config_file)
    rd = _run_dir(run_dir, config)
    passages, _ = artifacts.load_corpus(rd)
    retriever, phase = artifacts.latest_retriever(rd)
    idx_dir = rd / artifacts.INDEX_DIR
    idx = build_index(passages, retriever, snapshot_version=next_snapshot_version(idx_dir))
    idx.save(idx_dir)
    click.echo(
        f"indexed {len(idx)} passages (d={idx.dim}, snapshot {idx.snapshot_version}, "
        f"retriever phase {phase})"
    )


@main.command("train-retriever")
@click.option("--phase", type=click.Choice(["1", "2", "3"]), required=True)
@run_dir_option
@config_option
@seed_option
@click.option("--dev-count", type=int, default=40, show_default=True)
@click.option("--epochs", type=int, default=None)
def train_retriever_cmd(phase, run_dir, config_file, seed, dev_count, epochs):
    """Run one retriever training phase (each phase needs the previous one)."""
    config = _config(config_file, seed=seed)
    rd = _run_dir(run_dir, config)
    passages, examples = artifacts.load_corpus(rd)
    if not examples:
        raise click.ClickException("no dialogues staged; run `ingest` with --dialogues")
    train_ex, dev_ex = artifacts.train_dev_split(examples, dev_count)
    vocab = artifacts.load_vocab(rd)
    phase = int(phase)

    if phase == 1:
        model = artifacts.new_biencoder(vocab, config)
        metrics = train_phase1(
            model, train_ex, passages,
            epochs=epochs or config.phase1_epochs,
            batch_size=config.phase1_batch, lr=config.phase1_lr,
            seed=config.seed, dev_examples=dev_ex or None,
            max_history_tokens=config.history_max_tokens,
        )
    elif phase == 2:
        model, _ = BiEncoder.load(require_phase_checkpoint(rd, 1))
        vanilla = artifacts.new_generator(vocab, config)
        metrics = train_phase2(
            model, vanilla.net, train_ex, passages,
            k_train=config.phase2_k_train, epochs=epochs or config.phase2_epochs,
            lr=config.phase2_lr, seed=config.seed,
            max_history_tokens=config.history_max_tokens,
        )
    else:
        model, _ = BiEncoder.load(require_phase_checkpoint(rd, 2))
        reranker_path = rd / "re3g.reranker.ckpt"
        if not reranker_path.exists():
            raise click.ClickException(
                f"phase 3 needs a trained reranker at {reranker_path}"
            )
        reranker_model = CrossEncoder.load(reranker_path)
        metrics = train_phase3(
            model, reranker_model, train_ex, passages,
            k_train=config.phase3_k_train, epochs=epochs or config.phase3_epochs,
            lr=config.phase3_lr, seed=config.seed,
            kl_direction=config.kl_direction, dev_examples=dev_ex or None,
            max_history_tokens=config.history_max_tokens,
            index_dir=rd / artifacts.INDEX_DIR,
        )

    path = save_phase(model, rd, phase, metrics, config.to_dict())
    if metrics.get("step_losses"):
        save_loss_curve(
            metrics["step_losses"], rd / "figures" / f"retriever.phase{phase}.loss.png",
            title=f"retriever phase {phase} loss",
        )
    if metrics.get("dev_kl"):
        save_series(
            {"dev_kl": metrics["dev_kl"]},
            rd / "figures" / "retriever.phase3.kl.png",
            xlabel="epoch boundary", ylabel="KL", title="phase 3 dev KL",
        )
    click.echo(f"phase {phase} checkpoint -> {path}")
    if metrics.get("dev_recall"):
        click.echo(f"dev recall (last epoch): {metrics['dev_recall'][-1]}")
    if metrics.get("dev_kl"):
        click.echo(f"dev KL per epoch boundary: {metrics['dev_kl']}")


@main.command("train-reranker")
@run_dir_option
@config_option
@seed_option
@click.option("--dev-count", type=int, default=40, show_default=True)
@click.option("--epochs", type=int, default=None)
def train_reranker_cmd(run_dir, config_file, seed, dev_count, epochs):
    """InfoNCE reranker training with per-epoch dynamic negatives."""
    config = _config(config_file, seed=seed)
    rd = _run_dir(run_dir, config)
    passages, examples = artifacts.load_corpus(rd)
    train_ex, dev_ex = artifacts.train_dev_split(examples, dev_count)
    vocab = artifacts.load_vocab(rd)

    retriever, _ = BiEncoder.load(require_phase_checkpoint(rd, 1))
    idx = build_index(passages, retriever)
    pools_path = rd / artifacts.POOLS
    if pools_path.exists():
        pools = read_pools(pools_path)
    else:
        pools = build_pools(
            retriever, idx, train_ex, pool_size=config.pool_size,
            max_history_tokens=config.history_max_tokens,
        )
        write_pools(pools, pools_path)

    model = artifacts.new_cross_encoder(vocab, config)
    model.warm_start_embeddings(retriever.context_encoder.tok_emb.weight)
    metrics = train_reranker(
        model, train_ex, passages, pools,
        epochs=epochs or config.reranker_epochs, lr=config.reranker_lr,
        n_negatives=config.n_negatives, pool_size=config.pool_size,
        tau=config.tau, on_logits=config.infonce_on_logits, seed=config.seed,
        max_history_tokens=config.history_max_tokens,
        dev_examples=dev_ex or None, retriever=retriever, index=idx,
    )
    path = save_reranker(model, rd, metrics, config.to_dict())
    save_loss_curve(
        metrics["epoch_losses"], rd / "figures" / "reranker.loss.png",
        title="reranker epoch loss",
    )
    click.echo(f"reranker checkpoint -> {path}")
    if metrics["dev_metrics"]:
        click.echo(f"dev after rerank (last epoch): {metrics['dev_metrics'][-1]}")


@main.command("train-generator")
@click.option("--stage", type=click.Choice(["1", "2"]), required=True)
@run_dir_option
@config_option
@seed_option
@click.option("--epochs", type=int, default=None)
def train_generator_cmd(stage, run_dir, config_file, seed, epochs):
    """Two-stage prompt-based generator training."""
    config = _config(config_file, seed=seed)
    rd = _run_dir(run_dir, config)
    passages, examples = artifacts.load_corpus(rd)
    train_ex, _ = artifacts.train_dev_split(examples, 40)
    vocab = artifacts.load_vocab(rd)
    passages_by_id = {p.passage_id: p for p in passages}

    # shortlist per example: reranked top-k when a reranker exists,
    # retriever order otherwise, gold injected when missing
    retriever, _ = artifacts.latest_retriever(rd)
    idx = build_index(passages, retriever)
    reranker_path = rd / "re3g.reranker.ckpt"
    reranker_model = CrossEncoder.load(reranker_path) if reranker_path.exists() else None

    from ..retriever.train import build_query

    shortlists = {}
    for ex in train_ex:
        results = idx.search(
            retriever.encode_context(build_query(ex, config.history_max_tokens)),
            min(config.k_retrieve, len(idx)),
        )
        if reranker_model is not None:
            ranked = rerank(
                reranker_model, build_query(ex, config.history_max_tokens),
                results, passages_by_id, top_n=config.k_rerank_out,
            )
            shortlists[ex.example_id] = [passages_by_id[c.passage_id] for c in ranked]
        else:
            shortlists[ex.example_id] = [
                passages_by_id[r.passage_id] for r in results[: config.k_rerank_out]
            ]

    prompts = build_training_prompts(
        train_ex, shortlists, passages_by_id,
        task_ratios=(1.0, config.stage1_ratio_ground, config.stage1_ratio_agent),
        max_history_tokens=config.history_max_tokens,
        max_prompt_tokens=config.max_prompt_tokens,
        seed=config.seed,
    )
    write_prompts(prompts, rd / artifacts.PROMPTS)

    if stage == "1":
        model = artifacts.new_generator(vocab, config)
        metrics = train_stage1_joint(
            model, prompts, epochs=epochs or config.stage1_epochs,
            lr=config.stage1_lr, seed=config.seed,
        )
        path = save_generator(model, rd, "stage1", metrics, config.to_dict())
        save_loss_curve(
            metrics["step_losses"], rd / "figures" / "generator.stage1.loss.png",
            title="generator stage 1 loss",
        )
        click.echo(f"stage 1 checkpoint -> {path}")
    else:
        stage1_path = require_stage1(rd)
        for task in (TaskTemplate.GROUND_ONLY, TaskTemplate.AGENT_ONLY,
                     TaskTemplate.GROUND_THEN_AGENT):
            model, _ = GeneratorModel.load(stage1_path)
            metrics = train_stage2_per_task(
                model, prompts, task, lr=config.stage2_lr, seed=config.seed,
            )
            path = save_generator(model, rd, STAGE2_TAG[task], metrics, config.to_dict())
            click.echo(f"stage 2 ({task.value}, 1 epoch) -> {path}")


@main.command()
@click.option("--dialogues", type=click.Path(exists=True), required=True,
              help="dialogues.jsonl to answer (grounded turns)")
@click.option("--out", type=click.Path(), required=True, help="output directory")
@run_dir_option
@config_option
@click.option("--greedy/--beam", default=None)
def predict(dialogues, out, run_dir, config_file, greedy):
    """Run the pipeline over grounded dialogue turns; write predictions +
    references JSONL."""
    config = _config(config_file, greedy=greedy)
    rd = _run_dir(run_dir, config)
    pipeline = artifacts.load_pipeline(rd, config)
    examples = ingest_dialogues(dialogues)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as pf, \
         open(out / "references.jsonl", "w", encoding="utf-8") as rf:
        for ex in examples:
            pred = pipeline.predict_example(ex.context, ex.example_id)
            pf.write(json.dumps(pred, ensure_ascii=False) + "\n")
            rf.write(
                json.dumps(
                    {
                        "example_id": ex.example_id,
                        "positive_passage_ids": sorted(ex.positive_passage_ids),
                        "span": ex.gold_span,
                        "answer": ex.gold_answer,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    click.echo(f"wrote predictions and references for {len(examples)} examples -> {out}")


@main.command("eval")
@click.option("--pred", type=click.Path(exists=True), required=True)
@click.option("--ref", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@config_option
def eval_cmd(pred, ref, out, config_file):
    """Score predictions against references; write the report bundle."""
    config = _config(config_file)
    report = evaluate_run(pred, ref, config_echo=config.to_dict())
    paths = write_report(report, out)
    click.echo(render_markdown(report))
    click.echo(f"report -> {paths['json']}")


@main.command()
@run_dir_option
@config_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
def serve(run_dir, config_file, host, port):
    """Serve the HTTP API."""
    import uvicorn

    from .http import create_app

    config = _config(config_file)
    rd = _run_dir(run_dir, config)
    pipeline = artifacts.load_pipeline(rd, config)
    store = SessionStore(rd / "sessions")
    uvicorn.run(create_app(pipeline, store), host=host, port=port)


@main.command()
@run_dir_option
@config_option
def chat(run_dir, config_file):
    """Terminal REPL against the trained pipeline."""
    config = _config(config_file)
    rd = _run_dir(run_dir, config)
    pipeline = artifacts.load_pipeline(rd, config)
    store = SessionStore(rd / "sessions")
    session = store.create()
    click.echo(f"session {session.session_id} — empty line to quit")
    while True:
        try:
            text = input("you> ").strip()
        except (EOFError, KeyboardInterrupt):
            break
        if not text:
            break
        record = pipeline.answer_turn(session, text)
        store.record_turn(session, record)
        click.echo(f"bot> {record.answer}")
        if record.span:
            click.echo(f"     span: {record.span!r}")
        for c in record.candidates:
            rr = f"{c['reranker_score']:.3f}" if c["reranker_score"] is not None else "--"
            click.echo(
                f"     #{c['final_rank']} {c['passage_id']} "
                f"ret={c['retriever_score']:.3f} rr={rr}"
            )


if __name__ == "__main__":
    main()
