"""Offline exporter: file schemas and interop with the consumer toolkit."""

import json
import struct

import numpy as np
import pytest

from embed_service.cli import main as cli_main
from embed_service.encoder import HashingEncoder
from embed_service.export import export, read_texts

semeval_semantic_space = pytest.importorskip(
    "semeval.semantic_space", reason="consumer toolkit not installed"
)


def write_corpus(path, n=5):
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            fh.write(json.dumps({"id": f"s{i}", "text": f"Sentence number {i} here."}) + "\n")


class TestReadTexts:
    def test_corpus_jsonl(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_corpus(path, 3)
        ids, texts = read_texts(path)
        assert ids == ["s0", "s1", "s2"]
        assert texts[1] == "Sentence number 1 here."

    def test_plain_lines_use_line_numbers(self, tmp_path):
        path = tmp_path / "texts.txt"
        path.write_text("first sentence\nsecond sentence\n")
        ids, texts = read_texts(path)
        assert ids == ["0", "1"]
        assert texts == ["first sentence", "second sentence"]

    def test_malformed_jsonl_cites_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "text": "ok"}\n{oops\n')
        with pytest.raises(ValueError, match="2"):
            read_texts(path)


class TestExport:
    def test_export_then_load_in_consumer(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, 7)
        out = tmp_path / "corpus.semb"
        count = export(corpus, out, HashingEncoder(dim=48))
        assert count == 7
        matrix = semeval_semantic_space.load_embeddings(out, "binary")
        assert matrix.n == 7
        assert matrix.dim == 48
        assert matrix.ids == tuple(f"s{i}" for i in range(7))

    def test_jsonl_export_matches_binary(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, 4)
        bin_out = tmp_path / "e.semb"
        jsonl_out = tmp_path / "e.jsonl"
        encoder = HashingEncoder(dim=32)
        export(corpus, bin_out, encoder, format="binary")
        export(corpus, jsonl_out, encoder, format="jsonl")
        a = semeval_semantic_space.load_embeddings(bin_out, "binary")
        b = semeval_semantic_space.load_embeddings(jsonl_out, "jsonl")
        assert a.ids == b.ids
        assert np.array_equal(a.vectors, b.vectors)

    def test_empty_input_writes_valid_zero_count_file(self, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("")
        out = tmp_path / "empty.semb"
        assert export(empty, out, HashingEncoder(dim=16)) == 0
        header = out.read_bytes()
        magic, (version, dim, count) = header[:4], struct.unpack("<IIQ", header[4:20])
        assert magic == b"SEMB"
        assert (version, dim, count) == (1, 16, 0)

    def test_binary_header_layout(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, 2)
        out = tmp_path / "two.semb"
        export(corpus, out, HashingEncoder(dim=8))
        data = out.read_bytes()
        assert data[:4] == b"SEMB"
        version, dim, count = struct.unpack("<IIQ", data[4:20])
        assert (version, dim, count) == (1, 8, 2)
        id_len = struct.unpack("<I", data[20:24])[0]
        assert data[24 : 24 + id_len] == b"s0"

    def test_unsupported_format(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, 1)
        with pytest.raises(ValueError):
            export(corpus, tmp_path / "x", HashingEncoder(), format="npz")


class TestExportCli:
    def test_export_subcommand(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, 3)
        out = tmp_path / "out.semb"
        code = cli_main(
            ["export", "--in", str(corpus), "--out", str(out), "--model", "hash-v1-32"]
        )
        assert code == 0
        assert "wrote 3 embeddings" in capsys.readouterr().err
        assert semeval_semantic_space.load_embeddings(out, "binary").dim == 32

    def test_missing_input_is_error(self, tmp_path, capsys):
        code = cli_main(
            ["export", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")
