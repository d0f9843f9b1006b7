"""Run-level evaluation: score predictions against references and emit a
report (JSON + markdown + per-example CSV + figures)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..reporting.figures import save_metric_bars, save_series
from .metrics import grounding_em, mrr, recall_at_k, rouge_l, s_bleu, token_f1

RECALL_KS = (1, 5, 10)


@dataclass
class EvalReport:
    metrics: dict[str, float]
    per_example: list[dict]
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics,
            "per_example": self.per_example,
            "config_echo": self.config_echo,
        }


def _read_jsonl(path: str | Path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["example_id"]] = rec
    return out


def evaluate_examples(predictions: dict[str, dict], references: dict[str, dict]) -> EvalReport:
    missing_refs = sorted(set(predictions) - set(references))
    missing_preds = sorted(set(references) - set(predictions))
    if missing_refs or missing_preds:
        raise ValueError(
            "prediction/reference id mismatch: "
            f"no reference for {missing_refs[:10]}, no prediction for {missing_preds[:10]}"
        )

    ids = sorted(predictions)
    per_example = []
    answers, gold_answers = [], []
    for ex_id in ids:
        pred, ref = predictions[ex_id], references[ex_id]
        answer = pred.get("answer") or ""
        span = pred.get("span") or ""
        gold_answer = ref.get("answer") or ""
        gold_span = ref.get("span") or ""
        ranked = pred.get("ranked_passage_ids") or []
        gold_ids = ref.get("positive_passage_ids") or []
        record = {
            "example_id": ex_id,
            "token_f1": token_f1(answer, gold_answer),
            "rouge_l": rouge_l(answer, gold_answer),
            "grounding_em": grounding_em(span, gold_span),
            "grounding_f1": token_f1(span, gold_span),
            "mrr": mrr(ranked, gold_ids),
        }
        for k in RECALL_KS:
            record[f"recall@{k}"] = recall_at_k(ranked, gold_ids, k)
        per_example.append(record)
        answers.append(answer)
        gold_answers.append(gold_answer)

    n = max(1, len(per_example))
    keys = ["token_f1", "rouge_l", "grounding_em", "grounding_f1", "mrr"] + [
        f"recall@{k}" for k in RECALL_KS
    ]
    metrics = {k: sum(r[k] for r in per_example) / n for k in keys}
    metrics["s_bleu"] = s_bleu(answers, gold_answers)
    return EvalReport(metrics=metrics, per_example=per_example)


def evaluate_run(
    predictions_path: str | Path,
    references_path: str | Path,
    config_echo: dict | None = None,
) -> EvalReport:
    report = evaluate_examples(_read_jsonl(predictions_path), _read_jsonl(references_path))
    report.config_echo = config_echo or {}
    return report


def render_markdown(report: EvalReport) -> str:
    lines = ["| metric | value |", "| --- | --- |"]
    for name in sorted(report.metrics):
        lines.append(f"| {name} | {report.metrics[name]:.4f} |")
    lines.append("")
    lines.append(f"examples scored: {len(report.per_example)}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, out_dir: str | Path) -> dict[str, Path]:
    """Persist the report: JSON, markdown table, per-example CSV, figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "markdown": out_dir / "report.md",
        "csv": out_dir / "per_example.csv",
    }
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2))
    paths["markdown"].write_text(render_markdown(report))

    if report.per_example:
        fieldnames = list(report.per_example[0])
        with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(report.per_example)

    unit_metrics = {k: v for k, v in report.metrics.items() if k != "s_bleu"}
    paths["metrics_png"] = save_metric_bars(
        unit_metrics, out_dir / "figures" / "metrics.png", title="run metrics"
    )
    recall_series = {
        "recall": [report.metrics[f"recall@{k}"] for k in RECALL_KS]
    }
    paths["recall_png"] = save_series(
        recall_series,
        out_dir / "figures" / "recall.png",
        xlabel="cutoff index (k = 1, 5, 10)",
        ylabel="recall",
        title="retrieval recall",
    )
    return paths
