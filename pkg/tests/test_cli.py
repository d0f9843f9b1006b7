import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from re3g.service.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    """Synth corpus staged through ingest + split (shared by CLI tests)."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run_dir = root / "run"
    r = runner.invoke(main, ["synth", "--out", str(data), "--dialogues", "24", "--seed", "3"])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "ingest", "--docs", str(data / "documents.jsonl"),
        "--dialogues", str(data / "dialogues.jsonl"), "--run-dir", str(run_dir),
    ])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["split", "--run-dir", str(run_dir)])
    assert r.exit_code == 0, r.output
    return data, run_dir


def test_synth_outputs_schema(workspace):
    data, _ = workspace
    doc = json.loads((data / "documents.jsonl").read_text().splitlines()[0])
    assert set(doc) == {"doc_id", "title", "body", "meta"}
    dial = json.loads((data / "dialogues.jsonl").read_text().splitlines()[0])
    assert set(dial) == {"dial_id", "turns", "grounding"}
    g = dial["grounding"][0]
    assert {"turn_index", "positive_passage_ids", "span", "answer"} <= set(g)


def test_split_artifacts(workspace):
    _, run_dir = workspace
    assert (run_dir / "passages.jsonl").exists()
    assert (run_dir / "vocab.json").exists()
    assert (run_dir / "config.echo.json").exists()
    passage = json.loads((run_dir / "passages.jsonl").read_text().splitlines()[0])
    assert set(passage) == {
        "passage_id", "doc_id", "title", "text", "char_start", "char_end",
    }


def test_unknown_phase_is_usage_error(runner):
    r = runner.invoke(main, ["train-retriever", "--phase", "7"])
    assert r.exit_code != 0
    assert "Invalid value" in r.output


def test_phase2_without_phase1_errors(runner, workspace):
    _, run_dir = workspace
    r = runner.invoke(main, [
        "train-retriever", "--phase", "2", "--run-dir", str(run_dir),
    ])
    assert r.exit_code != 0
    assert "phase 1" in str(r.exception or r.output)


def test_stage2_without_stage1_errors(runner, workspace):
    _, run_dir = workspace
    r = runner.invoke(main, [
        "train-generator", "--stage", "2", "--run-dir", str(run_dir),
    ])
    assert r.exit_code != 0


def test_full_cli_pipeline(runner, workspace, tmp_path):
    """ingest -> split -> train all stages -> index -> predict -> eval."""
    data, run_dir = workspace
    steps = [
        ["train-retriever", "--phase", "1", "--run-dir", str(run_dir),
         "--epochs", "30", "--dev-count", "4"],
        ["index", "--run-dir", str(run_dir)],
        ["train-reranker", "--run-dir", str(run_dir), "--epochs", "1",
         "--dev-count", "4"],
        ["train-retriever", "--phase", "2", "--run-dir", str(run_dir),
         "--epochs", "1", "--dev-count", "4"],
        ["train-retriever", "--phase", "3", "--run-dir", str(run_dir),
         "--epochs", "1", "--dev-count", "4"],
        ["index", "--run-dir", str(run_dir)],
        ["train-generator", "--stage", "1", "--run-dir", str(run_dir),
         "--epochs", "2"],
        ["train-generator", "--stage", "2", "--run-dir", str(run_dir)],
    ]
    for step in steps:
        r = runner.invoke(main, step)
        assert r.exit_code == 0, f"{step}: {r.output}\n{r.exception}"

    for name in [
        "re3g.retriever.phase1.ckpt", "re3g.retriever.phase2.ckpt",
        "re3g.retriever.phase3.ckpt", "re3g.reranker.ckpt",
        "re3g.generator.stage1.ckpt", "re3g.generator.stage2.ground.ckpt",
        "re3g.generator.stage2.agent.ckpt", "re3g.generator.stage2.joint.ckpt",
        "pools.jsonl", "prompts.jsonl",
    ]:
        assert (run_dir / name).exists(), name
    assert (run_dir / "index" / "manifest.json").exists()
    # metrics sidecars carry the config echo
    sidecar = json.loads((run_dir / "re3g.retriever.phase1.metrics.json").read_text())
    assert sidecar["config_echo"]["tau"] == 0.07
    # training artifacts include loss figures
    assert (run_dir / "figures" / "retriever.phase1.loss.png").exists()
    assert (run_dir / "figures" / "reranker.loss.png").exists()

    out = tmp_path / "preds"
    r = runner.invoke(main, [
        "predict", "--dialogues", str(data / "dialogues.jsonl"),
        "--out", str(out), "--run-dir", str(run_dir), "--greedy",
    ])
    assert r.exit_code == 0, f"{r.output}\n{r.exception}"

    report_dir = tmp_path / "report"
    r = runner.invoke(main, [
        "eval", "--pred", str(out / "predictions.jsonl"),
        "--ref", str(out / "references.jsonl"), "--out", str(report_dir),
    ])
    assert r.exit_code == 0, r.output
    report = json.loads((report_dir / "report.json").read_text())
    assert "token_f1" in report["metrics"]
    assert (report_dir / "per_example.csv").exists()
    assert (report_dir / "figures" / "metrics.png").exists()
    assert (report_dir / "report.md").exists()


def test_eval_command_standalone(runner, tmp_path):
    pred = tmp_path / "p.jsonl"
    ref = tmp_path / "r.jsonl"
    pred.write_text(json.dumps({
        "example_id": "e", "answer": "a b", "span": "s",
        "ranked_passage_ids": ["p1"],
    }) + "\n")
    ref.write_text(json.dumps({
        "example_id": "e", "answer": "a b", "span": "s",
        "positive_passage_ids": ["p1"],
    }) + "\n")
    r = runner.invoke(main, [
        "eval", "--pred", str(pred), "--ref", str(ref),
        "--out", str(tmp_path / "out"),
    ])
    assert r.exit_code == 0, r.output
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["metrics"]["token_f1"] == 1.0
    assert report["metrics"]["s_bleu"] == 100.0
