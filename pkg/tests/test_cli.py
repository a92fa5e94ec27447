from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from r2a.answering import MockScorer, mock_embed
from r2a.cli import main, resolve_config
from r2a.corpus import EmbeddingMatrix, load_index, write_vector_file
from r2a.evaluation import evaluate
from r2a.retrieval import FrameFeatures, retrieval_to_jsonl, retrieve_video

from . import fixture_eval as fx


@pytest.fixture
def caption_file(tmp_path):
    path = tmp_path / "captions.txt"
    path.write_text("\n".join(fx.corpus_texts()) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def index_dir(tmp_path, caption_file, capsys):
    out = tmp_path / "index"
    rc = main(
        [
            "build-index",
            "--texts",
            str(caption_file),
            "--embed-with",
            "mock",
            "--dim",
            str(fx.DIM),
            "--out",
            str(out),
            "--shards",
            "2",
        ]
    )
    assert rc == 0
    capsys.readouterr()
    return out


def write_frames_file(tmp_path, video_index):
    rows = np.stack([mock_embed(c, fx.DIM) for c in fx.scene_captions(video_index)])
    path = tmp_path / f"{fx.video_id(video_index)}.r2av"
    write_vector_file(path, EmbeddingMatrix(values=rows, normalized=True))
    return path


@pytest.fixture
def candidates_file(tmp_path):
    path = tmp_path / "candidates.txt"
    path.write_text("\n".join(fx.CANDIDATES.answers) + "\n", encoding="utf-8")
    return path


class TestBuildIndex:
    def test_with_mock_embeddings(self, tmp_path, caption_file, capsys):
        rc = main(
            [
                "build-index",
                "--texts",
                str(caption_file),
                "--embed-with",
                "mock",
                "--dim",
                "8",
                "--out",
                str(tmp_path / "idx"),
            ]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["n"] == len(fx.corpus_texts())
        assert summary["dim"] == 8
        # vectors must equal mock_embed of each caption
        index = load_index(tmp_path / "idx")
        for i, text in enumerate(fx.corpus_texts()):
            assert index.embeddings.values[i].tobytes() == mock_embed(text, 8).tobytes()

    def test_precomputed_npy(self, tmp_path, capsys):
        texts = tmp_path / "t.txt"
        texts.write_text("a cat\na dog\nthree birds\n", encoding="utf-8")
        emb = tmp_path / "e.npy"
        np.save(emb, np.random.default_rng(0).standard_normal((3, 8)).astype(np.float32))
        rc = main(
            ["build-index", "--texts", str(texts), "--embeddings", str(emb), "--out", str(tmp_path / "idx")]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert (summary["n"], summary["dim"]) == (3, 8)
        index = load_index(tmp_path / "idx")
        assert (index.count, index.dim) == (3, 8)
        assert index.embeddings.normalized

    def test_row_count_mismatch_exits_2(self, tmp_path, capsys):
        texts = tmp_path / "t.txt"
        texts.write_text("\n".join(f"caption {i}" for i in range(10)) + "\n", encoding="utf-8")
        emb = tmp_path / "e.npy"
        np.save(emb, np.ones((9, 4), dtype=np.float32))
        rc = main(
            ["build-index", "--texts", str(texts), "--embeddings", str(emb), "--out", str(tmp_path / "idx")]
        )
        assert rc == 2
        assert "row count mismatch" in capsys.readouterr().err

    def test_missing_file_exits_1(self, tmp_path):
        rc = main(
            ["build-index", "--texts", str(tmp_path / "nope.txt"), "--embed-with", "mock", "--out", str(tmp_path / "idx")]
        )
        assert rc == 1


class TestRetrieve:
    def test_exact_hit(self, tmp_path, index_dir, capsys):
        # frame equal to corpus row 5 must hit id 5 with score 1.0
        target = fx.corpus_texts()[5]
        path = tmp_path / "probe.r2av"
        write_vector_file(
            path,
            EmbeddingMatrix(values=mock_embed(target, fx.DIM).reshape(1, -1), normalized=True),
        )
        rc = main(["retrieve", "--index", str(index_dir), "--frames", str(path), "-k", "1"])
        assert rc == 0
        line = json.loads(capsys.readouterr().out.splitlines()[0])
        assert line["hits"][0]["id"] == 5
        assert line["hits"][0]["score"] == pytest.approx(1.0, abs=1e-6)

    def test_k_larger_than_n_clamps(self, tmp_path, index_dir, capsys):
        frames = write_frames_file(tmp_path, 0)
        rc = main(["retrieve", "--index", str(index_dir), "--frames", str(frames), "-k", "10000"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        n = len(fx.corpus_texts())
        assert all(len(json.loads(line)["hits"]) == n for line in lines)

    def test_matches_library_output(self, tmp_path, index_dir, capsys):
        frames_path = write_frames_file(tmp_path, 1)
        rc = main(["retrieve", "--index", str(index_dir), "--frames", str(frames_path), "-k", "3"])
        assert rc == 0
        cli_out = capsys.readouterr().out

        index = load_index(index_dir)
        rows = np.stack([mock_embed(c, fx.DIM) for c in fx.scene_captions(1)])
        frames = FrameFeatures(video_id="v02", frames=rows, normalized=True)
        expected = retrieval_to_jsonl(retrieve_video(index, frames, 3), index.corpus)
        assert cli_out == expected

    def test_dim_mismatch_exits_2(self, tmp_path, index_dir):
        path = tmp_path / "bad.r2av"
        write_vector_file(path, EmbeddingMatrix(values=np.ones((1, 7), dtype=np.float32)))
        rc = main(["retrieve", "--index", str(index_dir), "--frames", str(path), "-k", "1"])
        assert rc == 2


class TestAnswer:
    def test_singleton_candidate(self, tmp_path, index_dir, capsys):
        frames = write_frames_file(tmp_path, 0)
        single = tmp_path / "single.txt"
        single.write_text("car\n", encoding="utf-8")
        rc = main(
            [
                "answer",
                "--index",
                str(index_dir),
                "--frames",
                str(frames),
                "--question",
                "What is shown?",
                "--candidates",
                str(single),
                "--scorer",
                "mock",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["answer"] == "car"

    def test_matches_library_select_answer(self, tmp_path, index_dir, candidates_file, capsys):
        frames_path = write_frames_file(tmp_path, 3)
        question = "Who or what stands out in the video about a street show?"
        rc = main(
            [
                "answer",
                "--index",
                str(index_dir),
                "--frames",
                str(frames_path),
                "--question",
                question,
                "--candidates",
                str(candidates_file),
                "--scorer",
                "mock",
                "-k",
                str(fx.K),
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)

        from r2a.evaluation import run_pipeline

        index = load_index(index_dir)
        frames = fx.build_fixture_frames()["v04"]
        result, _ = run_pipeline(
            question, index, frames, fx.CANDIDATES, MockScorer(), k=fx.K
        )
        assert payload["answer"] == result.answer
        assert payload["log_prob"] == pytest.approx(result.log_prob)

    def test_prompt_word_appears_in_debug_prompt(
        self, tmp_path, index_dir, candidates_file, capsys
    ):
        frames = write_frames_file(tmp_path, 0)
        rc = main(
            [
                "answer",
                "--index",
                str(index_dir),
                "--frames",
                str(frames),
                "--question",
                "What is shown?",
                "--candidates",
                str(candidates_file),
                "--scorer",
                "mock",
                "--prompt-word",
                "Contexts:",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert "Contexts:" in payload["prompt"]
        assert "Hints:" not in payload["prompt"]

    def test_unreachable_backend_exits_3(self, tmp_path, index_dir, candidates_file):
        frames = write_frames_file(tmp_path, 0)
        rc = main(
            [
                "answer",
                "--index",
                str(index_dir),
                "--frames",
                str(frames),
                "--question",
                "What is shown?",
                "--candidates",
                str(candidates_file),
                "--scorer",
                "http://127.0.0.1:1",
            ]
        )
        assert rc == 3


def write_eval_inputs(tmp_path, records):
    dataset = tmp_path / "dataset.jsonl"
    with open(dataset, "w", encoding="utf-8") as fh:
        for r in records:
            row = {"video_id": r.video_id, "question": r.question, "answer": r.answer}
            if r.answer_type:
                row["type"] = r.answer_type
            fh.write(json.dumps(row) + "\n")
    manifest = tmp_path / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i in range(len(fx.THEMES)):
            path = write_frames_file(tmp_path, i)
            fh.write(
                json.dumps(
                    {"video_id": fx.video_id(i), "path": str(path), "num_frames": fx.NUM_FRAMES}
                )
                + "\n"
            )
    return dataset, manifest


class TestEval:
    def test_matches_library_report(self, tmp_path, index_dir, candidates_file, capsys):
        records = fx.build_fixture_records()
        dataset, manifest = write_eval_inputs(tmp_path, records)
        report_path = tmp_path / "report.json"
        rc = main(
            [
                "eval",
                "--dataset",
                str(dataset),
                "--frames-manifest",
                str(manifest),
                "--index",
                str(index_dir),
                "--candidates",
                str(candidates_file),
                "--scorer",
                "mock",
                "-k",
                str(fx.K),
                "--report",
                str(report_path),
            ]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["accuracy"] == fx.EXPECTED_ACCURACY

        document = json.loads(report_path.read_text(encoding="utf-8"))
        assert document["correct"] == fx.EXPECTED_CORRECT
        expected = evaluate(
            records,
            fx.build_fixture_index(),
            fx.build_fixture_frames(),
            fx.CANDIDATES,
            MockScorer(),
            k=fx.K,
        )
        assert document["accuracy"] == expected.accuracy

    def test_random_baseline_deterministic(self, tmp_path, index_dir, candidates_file, capsys):
        records = fx.build_fixture_records()[:6]
        dataset, manifest = write_eval_inputs(tmp_path, records)
        args = [
            "eval",
            "--dataset",
            str(dataset),
            "--frames-manifest",
            str(manifest),
            "--index",
            str(index_dir),
            "--candidates",
            str(candidates_file),
            "--scorer",
            "mock",
            "-k",
            str(fx.K),
            "--baseline",
            "random",
            "--seed",
            "7",
        ]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second


class TestBench:
    def test_zero_queries(self, tmp_path, capsys):
        rc = main(["bench", "--index", str(tmp_path / "missing"), "--queries", "0"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out) == {"queries": 0, "timings_ms": []}

    def test_bench_reports_stats(self, index_dir, capsys):
        rc = main(["bench", "--index", str(index_dir), "--queries", "5", "-k", "3", "--repeat", "2"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["queries"] == 5
        assert payload["median_ms"] > 0
        assert payload["p99_ms"] >= payload["median_ms"]
        assert payload["qps"] > 0

    def test_thread_count_same_results(self, index_dir):
        index = load_index(index_dir)
        from r2a.retrieval import topk_frame

        rng = np.random.default_rng(0)
        z = rng.standard_normal(fx.DIM).astype(np.float32)
        assert topk_frame(index, z, 5, threads=1) == topk_frame(index, z, 5, threads=4)


class TestConfigResolution:
    def test_env_fallback(self, monkeypatch):
        import argparse

        monkeypatch.setenv("R2A_K", "25")
        monkeypatch.setenv("R2A_PROMPT_WORD", "Subtitles:")
        cfg = resolve_config(argparse.Namespace())
        assert cfg.k == 25
        assert cfg.prompt_word == "Subtitles:"
        assert cfg.token_budget == 500

    def test_flag_beats_env(self, monkeypatch):
        import argparse

        monkeypatch.setenv("R2A_K", "25")
        cfg = resolve_config(argparse.Namespace(k=3))
        assert cfg.k == 3

    def test_invalid_config_rejected(self):
        import argparse

        from r2a.errors import ValidationError

        with pytest.raises(ValidationError):
            resolve_config(argparse.Namespace(token_budget=1))


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "r2a.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "build-index" in proc.stdout
