"""Text-to-vector encoding behind a pluggable backend, plus distance math.

Two backends: ``bridge_http`` talks to an embedding service over the /embed
wire contract; ``offline_hash`` is a deterministic character-trigram signed
hash, good enough to make nearby texts nearby and unrelated texts far, with
zero model weights. Vectors are unit-normalized by default and clustered
under euclidean distance, which is monotone in cosine distance on the unit
sphere — the distance-threshold knobs elsewhere assume exactly this setup.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from scurank.cache import CacheKey, FileCache

NORM_TOLERANCE = 1e-6


class EncodingError(RuntimeError):
    """Backend returned something that violates the embedding contract."""


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension real vector; ``norm`` is the pre-normalization L2."""

    values: np.ndarray
    norm: float

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class EncoderConfig:
    backend: str = "offline_hash"
    endpoint: str = ""
    model_id: str = "all-mpnet-base-v2"
    dimension: int = 768
    normalize: bool = True
    seed: int = 0
    batch_size: int = 64
    timeout: float = 60.0

    def __post_init__(self):
        if self.backend not in ("bridge_http", "offline_hash"):
            raise ValueError(f"unknown encoder backend {self.backend!r}")
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")


def _unit(values: np.ndarray, fallback_bucket: int) -> np.ndarray:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        values = np.zeros_like(values)
        values[fallback_bucket] = 1.0
        return values
    return values / norm


def offline_hash_encode(text: str, dimension: int, seed: int = 0) -> EmbeddingVector:
    """Character-trigram multiset hashed with signs into ``dimension`` buckets.

    Deterministic given (text, dimension, seed) across processes. Texts with
    no trigrams (length < 3), or whose signed counts cancel exactly, map to
    the unit vector on bucket ``seed % dimension``.
    """
    if dimension < 8:
        raise ValueError("dimension must be at least 8")
    values = np.zeros(dimension, dtype=np.float64)
    raw = text.encode("utf-8")
    seed_bytes = seed.to_bytes(8, "little", signed=True)
    grams = [raw[i : i + 3] for i in range(len(raw) - 2)] if len(raw) >= 3 else []
    for gram in grams:
        digest = hashlib.sha256(seed_bytes + gram).digest()
        value = int.from_bytes(digest[:8], "big")
        bucket = value % dimension
        sign = 1.0 if (value >> 63) & 1 else -1.0
        values[bucket] += sign
    norm = float(np.linalg.norm(values))
    return EmbeddingVector(values=_unit(values, seed % dimension), norm=norm)


def _bridge_url(endpoint: str) -> str:
    if endpoint.rstrip("/").endswith("/embed"):
        return endpoint
    return endpoint.rstrip("/") + "/embed"


def _parse_bridge_response(payload: dict, n_texts: int, expect_dim: int | None) -> list[list[float]]:
    data = payload.get("data")
    if not isinstance(data, list):
        raise EncodingError('bridge response missing "data" list')
    indices = sorted(item.get("index") for item in data)
    if indices != list(range(n_texts)):
        raise EncodingError(
            f"bridge response indices must cover 0..{n_texts - 1} exactly, got {indices}"
        )
    vectors: list[list[float]] = [None] * n_texts  # type: ignore[list-item]
    for item in data:
        emb = item.get("embedding")
        if not isinstance(emb, list):
            raise EncodingError("bridge response item missing embedding")
        if expect_dim is not None and len(emb) != expect_dim:
            raise EncodingError(
                f"dimension mismatch: expected {expect_dim}, bridge returned {len(emb)}"
            )
        vectors[item["index"]] = [float(v) for v in emb]
    return vectors


def _encode_via_bridge(
    texts: Sequence[str], cfg: EncoderConfig, cache: FileCache | None
) -> list[EmbeddingVector]:
    out: dict[int, EmbeddingVector] = {}
    pending: list[tuple[int, str]] = []
    for i, text in enumerate(texts):
        if cache is not None:
            key = CacheKey.for_text("embedding", cfg.model_id, "", text)
            hit = cache.get(key)
            if hit is not None:
                raw = np.array(json.loads(hit.decode("utf-8")), dtype=np.float64)
                if raw.shape[0] != cfg.dimension:
                    raise EncodingError(
                        f"dimension mismatch: cached {raw.shape[0]}, expected {cfg.dimension}"
                    )
                out[i] = _finalize(raw, cfg)
                continue
        pending.append((i, text))

    for start in range(0, len(pending), cfg.batch_size):
        batch = pending[start : start + cfg.batch_size]
        body = {"model": cfg.model_id, "input": [t for _, t in batch]}
        response = requests.post(_bridge_url(cfg.endpoint), json=body, timeout=cfg.timeout)
        response.raise_for_status()
        vectors = _parse_bridge_response(response.json(), len(batch), cfg.dimension)
        for (i, text), emb in zip(batch, vectors):
            raw = np.array(emb, dtype=np.float64)
            if cache is not None:
                key = CacheKey.for_text("embedding", cfg.model_id, "", text)
                cache.put(key, json.dumps(raw.tolist()).encode("utf-8"))
            out[i] = _finalize(raw, cfg)
    return [out[i] for i in range(len(texts))]


def _finalize(raw: np.ndarray, cfg: EncoderConfig) -> EmbeddingVector:
    norm = float(np.linalg.norm(raw))
    if cfg.normalize:
        return EmbeddingVector(values=_unit(raw, cfg.seed % cfg.dimension), norm=norm)
    return EmbeddingVector(values=raw, norm=norm)


def encode_batch(
    texts: Sequence[str], cfg: EncoderConfig, cache: FileCache | None = None
) -> list[EmbeddingVector]:
    """Encode texts in order, one vector each; results cached per (model, text)."""
    if any(not t for t in texts):
        raise ValueError("texts must be nonempty strings")
    if cfg.backend == "offline_hash":
        return [offline_hash_encode(t, cfg.dimension, cfg.seed) for t in texts]
    if not cfg.endpoint:
        raise ValueError("bridge_http backend requires an endpoint")
    return _encode_via_bridge(texts, cfg, cache)


def check_bridge_contract(cfg: EncoderConfig, texts: Sequence[str] | None = None) -> int:
    """Probe an embedding service and assert the wire contract.

    Checks index coverage (one vector per input, in order), dimension
    consistency, unit norms, and same-text-same-vector determinism, both
    within a batch and across requests. Returns the dimension. Raises
    :class:`EncodingError` on any violation.
    """
    probe = list(texts) if texts else ["a", "binary star", "binary star", "ünïcode prøbe"]
    if len(probe) < 2:
        raise ValueError("need at least two probe texts")
    vectors = encode_batch(probe, cfg)
    if len(vectors) != len(probe):
        raise EncodingError(f"expected {len(probe)} vectors, got {len(vectors)}")
    dims = {v.dimension for v in vectors}
    if dims != {cfg.dimension}:
        raise EncodingError(f"dimension drift across batch: {sorted(dims)}")
    for i, vec in enumerate(vectors):
        if abs(float(np.linalg.norm(vec.values)) - 1.0) > NORM_TOLERANCE:
            raise EncodingError(f"vector {i} is not unit-normalized")
    by_text: dict[str, np.ndarray] = {}
    for text, vec in zip(probe, vectors):
        if text in by_text and not np.array_equal(by_text[text], vec.values):
            raise EncodingError(f"same text {text!r} produced different vectors in one batch")
        by_text[text] = vec.values
    again = encode_batch(probe, cfg)
    for i, (first, second) in enumerate(zip(vectors, again)):
        if not np.array_equal(first.values, second.values):
            raise EncodingError(f"vector {i} differs across requests")
    return cfg.dimension


def pairwise_distances(
    vectors: Sequence[EmbeddingVector], metric: str = "euclidean"
) -> np.ndarray:
    """Symmetric nonnegative distance matrix with a zero diagonal.

    On unit vectors the euclidean entry equals sqrt(2 - 2 cos). Symmetry is
    exact: only the upper triangle is computed and then mirrored.
    """
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    if not vectors:
        raise ValueError("need at least one vector")
    dims = {v.dimension for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch across vectors: {sorted(dims)}")
    matrix = np.stack([v.values for v in vectors])
    gram = matrix @ matrix.T
    if metric == "cosine":
        norms = np.linalg.norm(matrix, axis=1)
        denom = np.outer(norms, norms)
        with np.errstate(invalid="ignore", divide="ignore"):
            dist = 1.0 - np.where(denom > 0, gram / denom, 0.0)
        dist = np.clip(dist, 0.0, None)
    else:
        sq = np.diag(gram)
        dist = np.sqrt(np.clip(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0, None))
    upper = np.triu(dist, k=1)
    return upper + upper.T
