from .model import GeneratorConfig, GeneratorModel
from .templates import (
    TASK_PREFIX,
    GenerationOutput,
    PromptExample,
    TaskTemplate,
    build_prompt,
    build_target,
    parse_output,
)
from .train import (
    STAGE2_TAG,
    STAGE_CHECKPOINTS,
    build_training_prompts,
    inject_gold_passage,
    require_stage1,
    save_generator,
    train_stage1_joint,
    train_stage2_per_task,
    write_prompts,
)

__all__ = [
    "GenerationOutput",
    "GeneratorConfig",
    "GeneratorModel",
    "PromptExample",
    "STAGE2_TAG",
    "STAGE_CHECKPOINTS",
    "TASK_PREFIX",
    "TaskTemplate",
    "build_prompt",
    "build_target",
    "build_training_prompts",
    "inject_gold_passage",
    "parse_output",
    "require_stage1",
    "save_generator",
    "train_stage1_joint",
    "train_stage2_per_task",
    "write_prompts",
]
