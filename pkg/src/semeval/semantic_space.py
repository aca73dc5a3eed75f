"""Embedding storage, cosine retrieval, Gaussian fits, and Frechet distance."""

from __future__ import annotations

import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

SEMB_MAGIC = b"SEMB"
SEMB_VERSION = 1

# PSD repair threshold, relative to the largest eigenvalue.
EIGENVALUE_CLAMP_REL = 1e-10

_UINT64_MASK = (1 << 64) - 1


class EmbeddingFormatError(ValueError):
    """An embedding file violates the binary or JSONL schema."""


class EmbeddingServiceError(RuntimeError):
    """The embedding service failed or returned an inconsistent response."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n sentence embeddings (float64 rows) with an aligned id list.

    Vectors are stored as 32-bit floats on disk and promoted to float64 for
    all in-memory accumulation.
    """

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vecs.shape}")
        if len(self.ids) != vecs.shape[0]:
            raise ValueError(f"{len(self.ids)} ids but {vecs.shape[0]} vector rows")
        if vecs.shape[0] > 0 and vecs.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("embedding vectors must be finite")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("embedding ids must be unique")
        object.__setattr__(self, "vectors", vecs)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rows_for(self, ids: list[str] | tuple[str, ...]) -> np.ndarray:
        """Rows aligned to the requested id order; missing ids are an error."""
        index = {sid: i for i, sid in enumerate(self.ids)}
        missing = [sid for sid in ids if sid not in index]
        if missing:
            raise KeyError(f"missing embeddings for ids: {', '.join(missing[:5])}")
        return self.vectors[[index[sid] for sid in ids]]


@dataclass(frozen=True)
class GaussianSummary:
    """Mean and covariance of an embedding set (unbiased, symmetrized)."""

    mean: np.ndarray
    covariance: np.ndarray
    n: int


@dataclass(frozen=True)
class RetrievalConfig:
    """N-way retrieval settings: pool size, repetitions, and base seed."""

    n_way: int = 2
    runs: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_way < 2:
            raise ValueError(f"n_way must be >= 2, got {self.n_way}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")


@dataclass(frozen=True)
class RetrievalResult:
    mean_accuracy: float
    per_run: tuple[float, ...]
    std: float


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|); zero-norm inputs are rejected."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


def _unit_rows(vectors: np.ndarray, label: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError(f"{label} contains zero-norm vectors")
    return vectors / norms


def _run_accuracy(sims: np.ndarray, n_way: int, seed: int, run: int) -> float:
    m = sims.shape[0]
    hits = 0
    for i in range(m):
        rng = np.random.default_rng(np.random.SeedSequence([seed & _UINT64_MASK, run, i]))
        draws = rng.choice(m - 1, size=n_way - 1, replace=False)
        negatives = draws + (draws >= i)  # skip the positive index
        # strict inequality: exact ties count as failure
        if sims[i, i] > np.max(sims[i, negatives]):
            hits += 1
    return hits / m


def nway_retrieval_accuracy(
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    cfg: RetrievalConfig,
    threads: int = 1,
) -> RetrievalResult:
    """Mean N-way retrieval accuracy over seeded runs.

    Per run and query, N-1 negative candidates are sampled uniformly without
    replacement (excluding the paired candidate) from a generator seeded by
    (seed, run, query), so results are reproducible and independent of
    execution order. A query succeeds iff its paired candidate's cosine
    similarity strictly exceeds every negative's.
    """
    if set(queries.ids) != set(candidates.ids):
        raise ValueError("queries and candidates must share the same id set")
    if queries.n < cfg.n_way:
        raise ValueError(f"n_way={cfg.n_way} exceeds corpus size {queries.n}")
    q = _unit_rows(queries.vectors, "queries")
    c = _unit_rows(candidates.rows_for(queries.ids), "candidates")
    sims = q @ c.T
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_run = list(
                pool.map(lambda r: _run_accuracy(sims, cfg.n_way, cfg.seed, r), range(cfg.runs))
            )
    else:
        per_run = [_run_accuracy(sims, cfg.n_way, cfg.seed, r) for r in range(cfg.runs)]
    arr = np.asarray(per_run)
    return RetrievalResult(
        mean_accuracy=float(arr.mean()),
        per_run=tuple(per_run),
        std=float(arr.std(ddof=0)),
    )


def fit_gaussian(matrix: EmbeddingMatrix) -> GaussianSummary:
    """Column mean and unbiased covariance (divisor n-1), symmetrized."""
    if matrix.n < 2:
        raise ValueError(f"need at least 2 vectors to fit a Gaussian, got {matrix.n}")
    x = matrix.vectors
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (matrix.n - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianSummary(mean=mean, covariance=cov, n=matrix.n)


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below EIGENVALUE_CLAMP_REL times the largest are clamped to
    zero (sample covariances with n < d are singular by construction);
    anything more negative than that is rejected as non-PSD.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf entries")
    scale = np.abs(a).max() if a.size else 0.0
    asym = np.abs(a - a.T).max() if a.size else 0.0
    if asym > 1e-8 * max(1.0, scale):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    sym = (a + a.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    clamp = EIGENVALUE_CLAMP_REL * max(float(eigvals.max(initial=0.0)), 0.0)
    if float(eigvals.min(initial=0.0)) < -max(clamp, 1e-10 * max(1.0, scale)):
        raise ValueError(f"matrix is not PSD (min eigenvalue {eigvals.min():.3e})")
    eigvals = np.where(eigvals < clamp, 0.0, eigvals)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return (root + root.T) / 2.0


def frechet_distance(r: GaussianSummary, g: GaussianSummary) -> float:
    """|mu_r - mu_g|^2 + Tr(Sigma_r + Sigma_g - 2 (Sigma_r Sigma_g)^{1/2}).

    The cross term is computed through the similarity transform
    S_r Sigma_g S_r with S_r = sqrtm(Sigma_r), which has the same trace as
    the non-symmetric product's square root but keeps every factor
    symmetric PSD.
    """
    if r.mean.shape != g.mean.shape:
        raise ValueError(
            f"dimension mismatch: {r.mean.shape[0]} vs {g.mean.shape[0]}"
        )
    diff = r.mean - g.mean
    s_r = sqrtm_psd(r.covariance)
    inner = s_r @ g.covariance @ s_r
    cross = np.trace(sqrtm_psd((inner + inner.T) / 2.0))
    fd = float(diff @ diff + np.trace(r.covariance) + np.trace(g.covariance) - 2.0 * cross)
    return max(fd, 0.0)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path, format: str = "binary") -> None:
    """Write the binary ("SEMB", little-endian, float32 payload) or JSONL form."""
    if format == "binary":
        with open(path, "wb") as fh:
            fh.write(SEMB_MAGIC)
            fh.write(struct.pack("<IIQ", SEMB_VERSION, matrix.dim, matrix.n))
            payload = matrix.vectors.astype("<f4")
            for sid, row in zip(matrix.ids, payload):
                raw = sid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(row.tobytes())
    elif format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for sid, row in zip(matrix.ids, matrix.vectors.astype(np.float32)):
                fh.write(
                    json.dumps({"id": sid, "v": [float(x) for x in row]}, ensure_ascii=False)
                    + "\n"
                )
    else:
        raise ValueError(f"unsupported embedding format: {format!r}")


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise EmbeddingFormatError(f"truncated file while reading {what}")
    return data


def load_embeddings(path: str | Path, format: str = "binary") -> EmbeddingMatrix:
    """Read an embedding file written by save_embeddings (or the exporter)."""
    if format == "binary":
        with open(path, "rb") as fh:
            magic = _read_exact(fh, 4, "magic")
            if magic != SEMB_MAGIC:
                raise EmbeddingFormatError(f"bad magic {magic!r}, expected {SEMB_MAGIC!r}")
            version, dim, count = struct.unpack("<IIQ", _read_exact(fh, 16, "header"))
            if version != SEMB_VERSION:
                raise EmbeddingFormatError(f"unsupported version {version}")
            ids = []
            rows = np.empty((count, dim), dtype=np.float64)
            for i in range(count):
                (id_len,) = struct.unpack("<I", _read_exact(fh, 4, f"record {i} id length"))
                ids.append(_read_exact(fh, id_len, f"record {i} id").decode("utf-8"))
                raw = _read_exact(fh, 4 * dim, f"record {i} vector")
                rows[i] = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            if fh.read(1):
                raise EmbeddingFormatError("trailing bytes after final record")
        return EmbeddingMatrix(ids=tuple(ids), vectors=rows)
    if format == "jsonl":
        ids = []
        vectors = []
        dim = None
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise EmbeddingFormatError(f"line {line_no}: malformed JSON") from exc
                if "id" not in record or "v" not in record:
                    raise EmbeddingFormatError(f"line {line_no}: need 'id' and 'v' fields")
                vec = np.asarray(record["v"], dtype=np.float32).astype(np.float64)
                if dim is None:
                    dim = vec.shape[0]
                elif vec.shape[0] != dim:
                    raise EmbeddingFormatError(
                        f"record {record['id']!r}: dimension {vec.shape[0]} != {dim}"
                    )
                ids.append(record["id"])
                vectors.append(vec)
        if not ids:
            return EmbeddingMatrix(ids=(), vectors=np.empty((0, 0)))
        return EmbeddingMatrix(ids=tuple(ids), vectors=np.vstack(vectors))
    raise ValueError(f"unsupported embedding format: {format!r}")


def service_health(endpoint: str, timeout: float = 10.0) -> dict:
    """GET /v1/health; returns the decoded JSON body."""
    response = requests.get(f"{endpoint.rstrip('/')}/v1/health", timeout=timeout)
    if response.status_code != 200:
        raise EmbeddingServiceError(
            f"health check failed with {response.status_code}: {response.text}"
        )
    return response.json()


def fetch_embeddings(
    texts: list[str],
    endpoint: str,
    batch_size: int = 64,
    ids: list[str] | None = None,
    normalize: bool = False,
    timeout: float = 60.0,
    max_attempts: int = 3,
    retry_wait: float = 0.25,
) -> EmbeddingMatrix:
    """Fetch one vector per text over POST /v1/embed, preserving order.

    Requests go out in batches of batch_size; connection errors and 5xx
    responses are retried with exponential backoff (max_attempts total).
    Non-transient failures surface the response body.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if ids is None:
        ids = [str(i) for i in range(len(texts))]
    if len(ids) != len(texts):
        raise ValueError(f"{len(ids)} ids for {len(texts)} texts")
    if not texts:
        return EmbeddingMatrix(ids=(), vectors=np.empty((0, 0)))
    url = f"{endpoint.rstrip('/')}/v1/embed"
    rows: list[np.ndarray] = []
    dim = None
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        body = {"texts": batch, "normalize": normalize}
        response = None
        last_error: Exception | None = None
        for attempt in range(max_attempts):
            if attempt:
                time.sleep(min(retry_wait * 2 ** (attempt - 1), 5.0))
            try:
                response = requests.post(url, json=body, timeout=timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                response = None
                continue
            if response.status_code >= 500:
                last_error = EmbeddingServiceError(
                    f"server error {response.status_code}: {response.text}"
                )
                response = None
                continue
            break
        if response is None:
            raise EmbeddingServiceError(
                f"embedding request failed after {max_attempts} attempts: {last_error}"
            )
        if response.status_code != 200:
            raise EmbeddingServiceError(
                f"embedding request rejected with {response.status_code}: {response.text}"
            )
        payload = response.json()
        vectors = payload.get("vectors")
        if vectors is None or len(vectors) != len(batch):
            raise EmbeddingServiceError(
                f"expected {len(batch)} vectors, got {0 if vectors is None else len(vectors)}"
            )
        block = np.asarray(vectors, dtype=np.float64)
        if dim is None:
            dim = block.shape[1]
        elif block.shape[1] != dim:
            raise EmbeddingServiceError(
                f"dimension changed across batches: {block.shape[1]} != {dim}"
            )
        rows.append(block)
    return EmbeddingMatrix(ids=tuple(ids), vectors=np.vstack(rows))
