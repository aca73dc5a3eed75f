"""Wire-protocol contract of the HTTP service."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from embed_service.app import create_app
from embed_service.encoder import HashingEncoder


@pytest.fixture
def client():
    return TestClient(create_app(HashingEncoder(dim=64), batch_limit=16))


class TestHealth:
    def test_health_shape(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["model"] == "hash-v1-64"
        assert body["dim"] == 64


class TestEmbed:
    def test_basic_response_shape(self, client):
        response = client.post(
            "/v1/embed", json={"texts": ["alpha beta", "gamma"], "normalize": False}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["model"] == "hash-v1-64"
        assert body["dim"] == 64
        assert len(body["vectors"]) == 2
        assert all(len(v) == 64 for v in body["vectors"])

    def test_order_matches_request(self, client):
        texts = [f"sentence number {i} with word {i % 3}" for i in range(12)]
        response = client.post("/v1/embed", json={"texts": texts})
        vectors = np.asarray(response.json()["vectors"])
        encoder = HashingEncoder(dim=64)
        want = encoder.encode(texts)
        assert np.allclose(vectors, want, atol=1e-6)

    def test_same_text_twice_identical_rows(self, client):
        response = client.post("/v1/embed", json={"texts": ["repeat me", "repeat me"]})
        v = response.json()["vectors"]
        assert v[0] == v[1]

    def test_empty_string_is_legal(self, client):
        response = client.post("/v1/embed", json={"texts": [""]})
        assert response.status_code == 200
        row = np.asarray(response.json()["vectors"][0])
        assert np.all(np.isfinite(row))

    def test_normalize_unit_norm(self, client):
        response = client.post(
            "/v1/embed", json={"texts": ["alpha", "beta gamma", ""], "normalize": True}
        )
        vectors = np.asarray(response.json()["vectors"], dtype=np.float64)
        assert np.abs(np.linalg.norm(vectors, axis=1) - 1.0).max() < 1e-4

    def test_empty_batch_ok(self, client):
        response = client.post("/v1/embed", json={"texts": []})
        assert response.status_code == 200
        assert response.json()["vectors"] == []

    def test_malformed_body_is_400(self, client):
        for payload in ({"normalize": True}, {"texts": "not a list"}, {"texts": [1, 2]}):
            response = client.post("/v1/embed", json=payload)
            assert response.status_code == 400

    def test_oversized_batch_is_413(self, client):
        response = client.post("/v1/embed", json={"texts": ["x"] * 17})
        assert response.status_code == 413
        assert "limit" in response.json()["detail"]

    def test_inference_failure_is_500(self):
        class Broken(HashingEncoder):
            def encode(self, texts, normalize=False):
                raise RuntimeError("weights exploded")

        client = TestClient(create_app(Broken(dim=32)))
        response = client.post("/v1/embed", json={"texts": ["x"]})
        assert response.status_code == 500
        assert "weights exploded" in response.json()["detail"]
