"""Offline exporter producing the binary/JSONL embedding files consumers read.

The binary layout is the "SEMB" format: magic bytes, little-endian u32
version (1), u32 dim, u64 count, then per record a u32 id length, the UTF-8
id, and dim little-endian float32 values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

SEMB_MAGIC = b"SEMB"
SEMB_VERSION = 1


def read_texts(path: str | Path) -> tuple[list[str], list[str]]:
    """(ids, texts) from a corpus JSONL file (*.jsonl) or plain text lines.

    Plain-text inputs get line numbers as ids; blank lines are skipped in
    JSONL mode but kept (as empty sentences are legal) in plain mode only
    when non-empty after stripping the newline.
    """
    path = Path(path)
    ids: list[str] = []
    texts: list[str] = []
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{line_no}: malformed JSON") from exc
                if "id" not in record or "text" not in record:
                    raise ValueError(f"{path}:{line_no}: need 'id' and 'text' fields")
                ids.append(str(record["id"]))
                texts.append(record["text"])
    else:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                sentence = line.rstrip("\n")
                if sentence:
                    ids.append(str(line_no))
                    texts.append(sentence)
    return ids, texts


def write_semb(ids: list[str], vectors: np.ndarray, path: str | Path) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ValueError(f"expected ({len(ids)}, dim) vectors, got shape {vectors.shape}")
    dim = vectors.shape[1]
    with open(path, "wb") as fh:
        fh.write(SEMB_MAGIC)
        fh.write(struct.pack("<IIQ", SEMB_VERSION, dim, len(ids)))
        for sid, row in zip(ids, vectors):
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def write_jsonl(ids: list[str], vectors: np.ndarray, path: str | Path) -> None:
    vectors = np.asarray(vectors, dtype=np.float32)
    with open(path, "w", encoding="utf-8") as fh:
        for sid, row in zip(ids, vectors):
            fh.write(
                json.dumps({"id": sid, "v": [float(x) for x in row]}, ensure_ascii=False)
                + "\n"
            )


def export(
    texts_path: str | Path,
    out_path: str | Path,
    encoder,
    format: str = "binary",
    normalize: bool = False,
) -> int:
    """Embed a text file offline and write the embedding file; returns count."""
    if format not in ("binary", "jsonl"):
        raise ValueError(f"unsupported export format: {format!r}")
    ids, texts = read_texts(texts_path)
    vectors = encoder.encode(texts, normalize=normalize)
    if len(ids) == 0:
        vectors = np.zeros((0, encoder.dim), dtype=np.float32)
    if format == "binary":
        write_semb(ids, vectors, out_path)
    else:
        write_jsonl(ids, vectors, out_path)
    return len(ids)
