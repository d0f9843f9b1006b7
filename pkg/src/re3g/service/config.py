"""Flat pipeline configuration with paper-default hyperparameters.

Loadable from a flat TOML file; any field can be overridden by CLI flags.
The full config is echoed into every artifact (checkpoints, indexes,
reports, turn records) so runs stay attributable.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RUN_DIR_ENV = "RE3G_RUN_DIR"


@dataclass(frozen=True)
class PipelineConfig:
    # pipeline shape
    k_retrieve: int = 100
    k_rerank_out: int = 5
    tau: float = 0.07
    n_negatives: int = 30
    pool_size: int = 100
    task: str = "ground_then_agent"
    use_reranker: bool = True
    use_refinement: bool = True
    kl_direction: str = "teacher_student"
    infonce_on_logits: bool = True
    seed: int = 13

    # text budgets (whitespace/model tokens)
    history_max_tokens: int = 128
    max_prompt_tokens: int = 256
    split_policy: str = "structural"
    window_width: int = 200
    window_stride: int = 100

    # model sizes (desk scale, one CPU core)
    embed_dim: int = 64
    retriever_layers: int = 0
    retriever_context_tokens: int = 48
    retriever_passage_tokens: int = 32
    reranker_layers: int = 2
    reranker_joint_tokens: int = 192
    generator_dim: int = 96
    generator_layers: int = 2
    generator_src_tokens: int = 352
    generator_tgt_tokens: int = 96

    # decoding
    beam_size: int = 4
    max_target_tokens: int = 128
    greedy: bool = False

    # training
    phase1_epochs: int = 90
    phase1_lr: float = 5e-3
    phase1_batch: int = 32
    phase2_epochs: int = 1
    phase2_lr: float = 1e-3
    phase2_k_train: int = 8
    phase3_epochs: int = 2
    phase3_lr: float = 5e-4
    phase3_k_train: int = 24
    reranker_epochs: int = 3
    reranker_lr: float = 2e-3
    stage1_epochs: int = 8
    stage1_lr: float = 1e-3
    stage2_lr: float = 5e-4
    stage1_ratio_ground: float = 1.0
    stage1_ratio_agent: float = 1.0
    generator_serve: str = "stage2"  # or "stage1"

    def __post_init__(self):
        if not (1 <= self.k_rerank_out <= self.k_retrieve):
            raise ValueError(
                f"need 1 <= k_rerank_out <= k_retrieve, got "
                f"{self.k_rerank_out} / {self.k_retrieve}"
            )
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.task not in ("ground_then_agent", "ground_only", "agent_only"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.kl_direction not in ("teacher_student", "student_teacher"):
            raise ValueError(f"unknown kl_direction {self.kl_direction!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_overrides(self, **overrides) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **overrides)

    @classmethod
    def from_toml(cls, path: str | Path, **overrides) -> "PipelineConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls().with_overrides(**data)


def resolve_run_dir(base: str | Path | None, config: PipelineConfig) -> Path:
    """Content-address the run directory by config hash unless given an
    explicit location; RE3G_RUN_DIR overrides the default base."""
    if base is not None:
        return Path(base)
    root = Path(os.environ.get(RUN_DIR_ENV, "runs"))
    return root / config.config_hash()


def write_config_echo(run_dir: str | Path, config: PipelineConfig) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "config.echo.json"
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return path
