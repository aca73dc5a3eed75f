"""CLI contract: wiring, determinism, exit codes, and flag handling."""

import json

import numpy as np
import pytest

from semeval.cli import build_parser, main
from semeval.corpus import Condition, HypothesisSet, write_corpus, write_hypotheses
from semeval.corpus import Sample
from semeval.semantic_space import EmbeddingMatrix, save_embeddings

WORDS = [
    "amber", "bridge", "candle", "draft", "ember", "fortress", "garden",
    "harbor", "island", "jacket", "kernel", "lantern", "meadow", "needle",
]


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(71)
    samples = []
    for i in range(8):
        a, b = WORDS[i % 14], WORDS[(i + 5) % 14]
        samples.append(
            Sample(
                id=f"s{i}",
                ground_truth=f"The {a} stood beside the {b} at dawn.",
                mtv_variants=(f"A {a} waited near the {b} early.",),
                attributes=None,
            )
        )
    refs = tmp_path / "refs.jsonl"
    write_corpus(samples, refs)

    hyps = HypothesisSet(
        system_name="demo",
        condition=Condition.REAL,
        hypotheses={
            s.id: f"Some {WORDS[(i + 3) % 14]} rested beside the {WORDS[i % 14]} then."
            for i, s in enumerate(samples)
        },
    )
    hyps_path = tmp_path / "hyps.jsonl"
    write_hypotheses(hyps, hyps_path)

    ids = tuple(s.id for s in samples)
    emb_ref = tmp_path / "refs.semb"
    emb_hyp = tmp_path / "hyps.semb"
    save_embeddings(EmbeddingMatrix(ids=ids, vectors=rng.normal(size=(8, 5))), emb_ref)
    save_embeddings(EmbeddingMatrix(ids=ids, vectors=rng.normal(size=(8, 5))), emb_hyp)
    return tmp_path


def run(argv):
    return main(argv)


class TestEvalCommand:
    def test_writes_report(self, workspace, capsys):
        out = workspace / "report.json"
        code = run([
            "eval",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
            "--emb-refs", str(workspace / "refs.semb"),
            "--emb-hyps", str(workspace / "hyps.semb"),
            "--n-ways", "2,4",
            "--runs", "3",
            "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["system_name"] == "demo"
        for key in ("acc_2way", "acc_4way", "content_recall", "dist_1", "dist_2",
                    "head_entropy", "self_bleu", "fd"):
            assert key in report["metrics"]

    def test_stdout_when_no_out(self, workspace, capsys):
        code = run([
            "eval",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
            "--emb-refs", str(workspace / "refs.semb"),
            "--emb-hyps", str(workspace / "hyps.semb"),
            "--n-ways", "2",
            "--runs", "2",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert json.loads(out)["condition"] == "real"

    def test_byte_identical_across_runs_and_threads(self, workspace):
        outputs = []
        for run_idx, threads in ((0, "1"), (1, "1"), (2, "4")):
            out = workspace / f"rep{run_idx}.json"
            code = run([
                "eval",
                "--refs", str(workspace / "refs.jsonl"),
                "--hyps", str(workspace / "hyps.jsonl"),
                "--emb-refs", str(workspace / "refs.semb"),
                "--emb-hyps", str(workspace / "hyps.semb"),
                "--n-ways", "2,4",
                "--runs", "4",
                "--seed", "7",
                "--threads", threads,
                "--out", str(out),
            ])
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_markdown_format(self, workspace, capsys):
        code = run([
            "eval",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
            "--emb-refs", str(workspace / "refs.semb"),
            "--emb-hyps", str(workspace / "hyps.semb"),
            "--n-ways", "2",
            "--runs", "2",
            "--format", "markdown",
        ])
        assert code == 0
        text = capsys.readouterr().out
        assert "| 2-Way |" in text or "2-Way" in text


class TestOtherCommands:
    def test_bleu_trap(self, workspace, capsys):
        code = run([
            "bleu",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
        ])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)["metrics"]
        assert {"bleu1_mtv", "bleu1_single", "bleu2_mtv", "bleu2_single"} <= set(metrics)

    def test_retrieval_deterministic(self, workspace):
        args = [
            "retrieval",
            "--emb-queries", str(workspace / "hyps.semb"),
            "--emb-candidates", str(workspace / "refs.semb"),
            "--n-ways", "2,4",
            "--runs", "5",
            "--seed", "3",
        ]
        out_a = workspace / "a.json"
        out_b = workspace / "b.json"
        assert run(args + ["--out", str(out_a)]) == 0
        assert run(args + ["--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        report = json.loads(out_a.read_text())
        assert "acc_2way_std" in report["metrics"]

    def test_fd_command(self, workspace, capsys):
        code = run([
            "fd",
            "--emb-a", str(workspace / "refs.semb"),
            "--emb-b", str(workspace / "hyps.semb"),
        ])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["metrics"]["fd"] > 0

    def test_fd_same_file_is_zero(self, workspace, capsys):
        code = run([
            "fd",
            "--emb-a", str(workspace / "refs.semb"),
            "--emb-b", str(workspace / "refs.semb"),
        ])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["metrics"]["fd"] < 1e-9

    def test_noise_command(self, workspace, capsys):
        code = run([
            "noise",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps-real", str(workspace / "hyps.jsonl"),
            "--hyps-noise", str(workspace / "hyps.jsonl"),
            "--emb-refs", str(workspace / "refs.semb"),
            "--emb-real", str(workspace / "hyps.semb"),
            "--emb-noise", str(workspace / "hyps.semb"),
            "--system", "demo",
        ])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["verdict"] is False
        assert report["metrics"]["fd_delta"] == 0.0

    def test_prefix_command(self, workspace, capsys):
        code = run([
            "prefix",
            "--refs", str(workspace / "refs.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
        ])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)["metrics"]
        assert "bleu2_rel_change" in metrics

    def test_baselines_command(self, workspace, capsys, tmp_path):
        rows = []
        for i in range(6):
            rows.append(
                {"id": f"t{i}", "text": f"Sentence {WORDS[i]}.",
                 "sentiment": "Pos" if i % 2 else "Neg", "topic": "Movie",
                 "length": 5 + i, "surprisal": 0.4 + 0.1 * i}
            )
        train = tmp_path / "train.jsonl"
        train.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        code = run(["baselines", "--train", str(train), "--eval", str(train)])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)["metrics"]
        assert metrics["chance_sentiment"] == 0.5

    def test_embed_export_project_mode(self, workspace, capsys):
        out = workspace / "proj.jsonl"
        code = run([
            "embed-export",
            "--project", f"refs={workspace / 'refs.semb'}",
            "--project", f"hyps={workspace / 'hyps.semb'}",
            "--out", str(out),
        ])
        assert code == 0
        labels = {json.loads(line)["label"] for line in out.read_text().splitlines()}
        assert labels == {"refs", "hyps"}

    def test_selftest(self, capsys):
        assert run(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("ok ") == 7


class TestConfigPrecedence:
    def test_config_file_supplies_defaults(self, workspace, capsys):
        cfg = workspace / "run.cfg"
        cfg.write_text("seed = 5\nruns = 2\nn_ways = 2\n")
        out_a = workspace / "a.json"
        out_b = workspace / "b.json"
        base = [
            "retrieval",
            "--emb-queries", str(workspace / "hyps.semb"),
            "--emb-candidates", str(workspace / "refs.semb"),
            "--config", str(cfg),
        ]
        assert run(base + ["--out", str(out_a)]) == 0
        # flag overrides the config file value
        assert run(base + ["--seed", "5", "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_flag_beats_config(self, workspace):
        cfg = workspace / "run.cfg"
        cfg.write_text("seed = 5\nruns = 2\nn_ways = 2\n")
        out_a = workspace / "a.json"
        out_b = workspace / "b.json"
        base = [
            "retrieval",
            "--emb-queries", str(workspace / "hyps.semb"),
            "--emb-candidates", str(workspace / "refs.semb"),
            "--config", str(cfg),
        ]
        assert run(base + ["--out", str(out_a)]) == 0
        assert run(base + ["--seed", "99", "--out", str(out_b)]) == 0
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_unknown_config_key_rejected(self, workspace, capsys):
        cfg = workspace / "run.cfg"
        cfg.write_text("mystery = 1\n")
        code = run([
            "retrieval",
            "--emb-queries", str(workspace / "hyps.semb"),
            "--emb-candidates", str(workspace / "refs.semb"),
            "--config", str(cfg),
        ])
        assert code == 1
        assert "mystery" in capsys.readouterr().err


class TestErrorHandling:
    def test_missing_file_exits_one(self, workspace, capsys):
        code = run([
            "bleu",
            "--refs", str(workspace / "nope.jsonl"),
            "--hyps", str(workspace / "hyps.jsonl"),
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert err.count("\n") == 1  # one-line machine-parsable error

    def test_unknown_flag_exits_two(self, workspace):
        with pytest.raises(SystemExit) as info:
            run(["selftest", "--mystery-flag"])
        assert info.value.code == 2

    def test_missing_required_flag_exits_two(self):
        with pytest.raises(SystemExit) as info:
            run(["eval"])
        assert info.value.code == 2

    def test_no_endpoint_configured(self, workspace, capsys, monkeypatch):
        monkeypatch.delenv("SEMEVAL_EMBED_ENDPOINT", raising=False)
        code = run([
            "embed-export",
            "--texts", str(workspace / "refs.jsonl"),
            "--out", str(workspace / "x.semb"),
        ])
        assert code == 1
        assert "SEMEVAL_EMBED_ENDPOINT" in capsys.readouterr().err

    def test_bad_corpus_line_cited(self, workspace, capsys):
        bad = workspace / "bad.jsonl"
        bad.write_text('{"id": "s1", "text": "ok"}\n{broken\n')
        code = run([
            "bleu", "--refs", str(bad), "--hyps", str(workspace / "hyps.jsonl"),
        ])
        assert code == 1
        assert "line 2" in capsys.readouterr().err


class TestHelp:
    def test_help_lists_every_eval_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["eval", "--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for flag in (
            "--refs", "--hyps", "--emb-refs", "--emb-hyps", "--emb-format",
            "--system", "--condition", "--config", "--out", "--format", "--seed",
            "--threads", "--runs", "--n-ways", "--bleu-order", "--bleu-smoothing",
            "--dist-denominator", "--recall-aggregation", "--self-bleu-order",
            "--self-bleu-epsilon", "--stopwords", "--prefixes", "--fd-normalize",
        ):
            assert flag in text

    def test_top_level_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--help"])
        text = capsys.readouterr().out
        for name in ("eval", "bleu", "retrieval", "fd", "noise", "prefix",
                     "baselines", "embed-export", "selftest"):
            assert name in text
