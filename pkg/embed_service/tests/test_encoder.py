"""Determinism and geometry of the built-in hashing encoder."""

import numpy as np
import pytest

from embed_service.encoder import DEFAULT_MODEL_ID, HashingEncoder, load_encoder

SENTENCES = [
    "The amber bridge stood beside the harbor at dawn.",
    "A quiet candle burned in the garden.",
    "He was awarded the Presidential Medal of Freedom.",
]


class TestHashingEncoder:
    def test_shape_and_dtype(self):
        enc = HashingEncoder(dim=64)
        rows = enc.encode(SENTENCES)
        assert rows.shape == (3, 64)
        assert rows.dtype == np.float32

    def test_deterministic(self):
        enc = HashingEncoder()
        a = enc.encode(SENTENCES)
        b = enc.encode(SENTENCES)
        assert np.array_equal(a, b)
        # a fresh instance gives the same vectors: nothing is process-local
        assert np.array_equal(a, HashingEncoder().encode(SENTENCES))

    def test_duplicates_get_identical_rows(self):
        enc = HashingEncoder()
        rows = enc.encode([SENTENCES[0], SENTENCES[1], SENTENCES[0]])
        assert np.array_equal(rows[0], rows[2])
        assert not np.array_equal(rows[0], rows[1])

    def test_empty_string_is_finite_and_nonzero(self):
        enc = HashingEncoder()
        rows = enc.encode([""])
        assert rows.shape == (1, 384)
        assert np.all(np.isfinite(rows))
        assert np.linalg.norm(rows[0]) > 0

    def test_normalize_unit_norm(self):
        enc = HashingEncoder()
        rows = enc.encode(SENTENCES + [""], normalize=True)
        norms = np.linalg.norm(rows.astype(np.float64), axis=1)
        assert np.abs(norms - 1.0).max() < 1e-4

    def test_zero_texts(self):
        enc = HashingEncoder(dim=32)
        assert enc.encode([]).shape == (0, 32)

    def test_related_texts_closer_than_unrelated(self):
        enc = HashingEncoder()
        a, b, c = enc.encode(
            [
                "the amber bridge stood near the water",
                "an amber bridge stands near the water",
                "quarterly revenue guidance exceeded analyst expectations",
            ],
            normalize=True,
        ).astype(np.float64)
        assert float(a @ b) > float(a @ c)

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            HashingEncoder(dim=4)


class TestLoadEncoder:
    def test_default_id(self):
        enc = load_encoder(DEFAULT_MODEL_ID)
        assert enc.model_id == "hash-v1-384"
        assert enc.dim == 384

    def test_sized_variant(self):
        enc = load_encoder("hash-v1-128")
        assert enc.dim == 128

    def test_bare_alias(self):
        assert load_encoder("hash-v1").dim == 384
