"""Two-stage generator training over prompt/target pairs.

Stage 1 trains all task templates jointly; stage 2 finetunes one task for
exactly one epoch, emitting a per-task checkpoint. Prompt construction
injects a gold passage when the reranker's shortlist missed every positive,
so the span target is always extractable from the input during training.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import torch

from ..corpus import GroundedExample, Passage
from ..models import pad_batch
from .model import GeneratorModel
from .templates import PromptExample, TaskTemplate, build_prompt, build_target

STAGE_CHECKPOINTS = {
    "stage1": "re3g.generator.stage1.ckpt",
    "stage2.ground": "re3g.generator.stage2.ground.ckpt",
    "stage2.agent": "re3g.generator.stage2.agent.ckpt",
    "stage2.joint": "re3g.generator.stage2.joint.ckpt",
}

STAGE2_TAG = {
    TaskTemplate.GROUND_ONLY: "stage2.ground",
    TaskTemplate.AGENT_ONLY: "stage2.agent",
    TaskTemplate.GROUND_THEN_AGENT: "stage2.joint",
}


def inject_gold_passage(
    shortlist: list[Passage], ex: GroundedExample, passages_by_id: dict[str, Passage]
) -> list[Passage]:
    """Replace the lowest-ranked shortlist entry with a gold passage when no
    positive made the cut (training-time only)."""
    if any(p.passage_id in ex.positive_passage_ids for p in shortlist):
        return shortlist
    gold_id = next(
        (pid for pid in sorted(ex.positive_passage_ids) if pid in passages_by_id), None
    )
    if gold_id is None:
        return shortlist
    patched = list(shortlist)
    if patched:
        patched[-1] = passages_by_id[gold_id]
    else:
        patched = [passages_by_id[gold_id]]
    return patched


def _tasks_for(ex_index: int, ratios: tuple[float, float, float], rng: random.Random):
    pairs = zip(
        (TaskTemplate.GROUND_THEN_AGENT, TaskTemplate.GROUND_ONLY, TaskTemplate.AGENT_ONLY),
        ratios,
    )
    for task, ratio in pairs:
        if ratio >= 1.0 or rng.random() < ratio:
            yield task


def build_training_prompts(
    examples: list[GroundedExample],
    shortlists: dict[str, list[Passage]],
    passages_by_id: dict[str, Passage],
    *,
    task_ratios: tuple[float, float, float] = (1.0, 1.0, 1.0),
    max_history_tokens: int = 128,
    max_prompt_tokens: int = 256,
    seed: int = 13,
) -> list[PromptExample]:
    rng = random.Random(seed)
    prompts: list[PromptExample] = []
    for i, ex in enumerate(examples):
        shortlist = inject_gold_passage(
            shortlists.get(ex.example_id, []), ex, passages_by_id
        )
        if not shortlist:
            continue
        texts = [p.text for p in shortlist]
        for task in _tasks_for(i, task_ratios, rng):
            if task is not TaskTemplate.AGENT_ONLY and not ex.gold_span:
                continue
            if task is not TaskTemplate.GROUND_ONLY and not ex.gold_answer:
                continue
            prompts.append(
                PromptExample(
                    example_id=ex.example_id,
                    task=task,
                    input_text=build_prompt(
                        task, ex.context, texts,
                        max_history_tokens=max_history_tokens,
                        max_prompt_tokens=max_prompt_tokens,
                    ),
                    target_text=build_target(task, ex.gold_span, ex.gold_answer),
                )
            )
    return prompts


def write_prompts(prompts: list[PromptExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in prompts:
            fh.write(
                json.dumps(
                    {
                        "example_id": p.example_id,
                        "task": p.task.value,
                        "input_text": p.input_text,
                        "target_text": p.target_text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def _run_epochs(
    model: GeneratorModel,
    prompts: list[PromptExample],
    *,
    epochs: int,
    steps: int | None,
    batch_size: int,
    lr: float,
    seed: int,
) -> dict:
    if not prompts:
        raise ValueError("no prompt examples to train on")
    torch.manual_seed(seed)
    rng = random.Random(seed)
    vocab = model.vocab
    net = model.net
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    step_losses: list[float] = []
    total = 0
    net.train()
    for _ in range(epochs):
        order = list(prompts)
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            src = pad_batch(
                [vocab.encode(p.input_text, net.max_src) for p in batch], vocab.pad_id
            )
            tgt = pad_batch(
                [vocab.encode(p.target_text, net.max_tgt - 1) for p in batch],
                vocab.pad_id,
            )
            loss = net.nll_loss(src, tgt)
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_losses.append(loss.item())
            total += 1
            if steps is not None and total >= steps:
                net.eval()
                return {"step_losses": step_losses, "steps": total}
    net.eval()
    return {"step_losses": step_losses, "steps": total, "epochs": epochs}


def train_stage1_joint(
    model: GeneratorModel,
    prompts: list[PromptExample],
    *,
    epochs: int = 8,
    steps: int | None = None,
    batch_size: int = 16,
    lr: float = 1e-3,
    seed: int = 13,
) -> dict:
    metrics = _run_epochs(
        model, prompts, epochs=epochs, steps=steps, batch_size=batch_size, lr=lr, seed=seed
    )
    metrics["stage"] = "stage1"
    return metrics


def train_stage2_per_task(
    model: GeneratorModel,
    prompts: list[PromptExample],
    task: TaskTemplate,
    *,
    batch_size: int = 16,
    lr: float = 5e-4,
    seed: int = 13,
) -> dict:
    """One additional epoch on a single task's instances (exactly one)."""
    subset = [p for p in prompts if p.task is task]
    metrics = _run_epochs(
        model, subset, epochs=1, steps=None, batch_size=batch_size, lr=lr, seed=seed
    )
    metrics["stage"] = STAGE2_TAG[task]
    metrics["task"] = task.value
    return metrics


def save_generator(
    model: GeneratorModel, run_dir: str | Path, stage: str, metrics: dict, config_echo: dict
) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / STAGE_CHECKPOINTS[stage]
    model.save(path, stage=stage, extra={"config_echo": config_echo})
    path.with_suffix(".metrics.json").write_text(
        json.dumps({**metrics, "config_echo": config_echo}, indent=2)
    )
    return path


def require_stage1(run_dir: str | Path) -> Path:
    path = Path(run_dir) / STAGE_CHECKPOINTS["stage1"]
    if not path.exists():
        raise FileNotFoundError(
            f"stage 2 requires the stage-1 checkpoint at {path}; run stage 1 first"
        )
    return path
