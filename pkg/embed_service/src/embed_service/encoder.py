"""Sentence encoders behind one tiny interface: encode(texts, normalize)."""

from __future__ import annotations

import hashlib
import math
import re
import threading

import numpy as np

DEFAULT_MODEL_ID = "hash-v1-384"

_WORD_RE = re.compile(r"[a-z0-9']+")


class HashingEncoder:
    """Deterministic feature-hashing sentence encoder (no downloads needed).

    Word unigrams, word bigrams, and in-word character trigrams are signed-
    hashed into a fixed-dimensional vector with sublinear term weighting.
    A constant bias feature keeps every vector nonzero, so normalization is
    always well-defined (the empty string included).
    """

    def __init__(self, dim: int = 384):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.model_id = f"hash-v1-{dim}"

    def _features(self, text: str):
        words = _WORD_RE.findall(text.lower())
        yield "B"  # bias, always present
        for word in words:
            yield f"w\x1f{word}"
            padded = f" {word} "
            for i in range(len(padded) - 2):
                yield f"c\x1f{padded[i : i + 3]}"
        for a, b in zip(words, words[1:]):
            yield f"b\x1f{a}\x1f{b}"

    def _encode_one(self, text: str) -> np.ndarray:
        counts: dict[str, int] = {}
        for feature in self._features(text):
            counts[feature] = counts.get(feature, 0) + 1
        vec = np.zeros(self.dim, dtype=np.float64)
        for feature, count in counts.items():
            digest = hashlib.blake2b(
                feature.encode("utf-8"), digest_size=8, person=b"semb-hash-v1"
            ).digest()
            h = int.from_bytes(digest, "little")
            index = (h >> 1) % self.dim
            sign = 1.0 if h & 1 else -1.0
            vec[index] += sign * (1.0 + math.log(count))
        return vec

    def encode(self, texts: list[str], normalize: bool = False) -> np.ndarray:
        rows = np.vstack([self._encode_one(t) for t in texts]) if texts else np.zeros(
            (0, self.dim)
        )
        if normalize and len(rows):
            rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
        return rows.astype(np.float32)


class SentenceTransformerEncoder:
    """Wrapper around a pretrained sentence-transformers checkpoint.

    Inference runs in eval mode behind a lock, so outputs are deterministic
    and request handling can stay concurrent.
    """

    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self.model_id = model_id
        self._model = SentenceTransformer(model_id)
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self._lock = threading.Lock()

    def encode(self, texts: list[str], normalize: bool = False) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        with self._lock:
            rows = self._model.encode(
                texts,
                convert_to_numpy=True,
                normalize_embeddings=normalize,
                show_progress_bar=False,
            )
        return np.asarray(rows, dtype=np.float32)


def load_encoder(model_id: str = DEFAULT_MODEL_ID):
    """Resolve a model id: hash-v1[-dim] is built-in, anything else is a
    sentence-transformers checkpoint id."""
    if model_id == "hash-v1":
        return HashingEncoder()
    if model_id.startswith("hash-v1-"):
        return HashingEncoder(dim=int(model_id.rsplit("-", 1)[1]))
    return SentenceTransformerEncoder(model_id)
