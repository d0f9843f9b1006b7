from .metrics import (
    grounding_em,
    mrr,
    normalize,
    recall_at_k,
    rouge_l,
    s_bleu,
    token_f1,
)
from .report import (
    EvalReport,
    evaluate_examples,
    evaluate_run,
    render_markdown,
    write_report,
)

__all__ = [
    "EvalReport",
    "evaluate_examples",
    "evaluate_run",
    "grounding_em",
    "mrr",
    "normalize",
    "recall_at_k",
    "render_markdown",
    "rouge_l",
    "s_bleu",
    "token_f1",
    "write_report",
]
