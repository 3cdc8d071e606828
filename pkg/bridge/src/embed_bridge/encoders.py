"""Encoder backends: a pretrained sentence encoder, and a weight-free
deterministic hash encoder for tests and environments without model access.

Normalization happens in the app layer, so every backend only has to return
raw float vectors of a fixed dimension, deterministically.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np

HASH_PREFIX = "hash:"


class Encoder(Protocol):
    model_id: str
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEncoder:
    """Word-level signed feature hashing; deterministic, no weights."""

    def __init__(self, dim: int = 64, model_id: str | None = None):
        if dim < 8:
            raise ValueError("dim must be at least 8")
        self.dim = dim
        self.model_id = model_id or f"{HASH_PREFIX}{dim}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for word in text.lower().split():
                digest = hashlib.sha512(word.encode("utf-8")).digest()
                value = int.from_bytes(digest[:8], "little")
                sign = 1.0 if value & 1 else -1.0
                out[row, (value >> 1) % self.dim] += sign
            if not out[row].any():
                out[row, len(text) % self.dim] = 1.0
        return out


class SentenceTransformerEncoder:
    """Wraps a pretrained sentence-transformers model; CPU, inference mode."""

    def __init__(self, model_id: str):
        import torch
        from sentence_transformers import SentenceTransformer

        torch.set_grad_enabled(False)
        torch.manual_seed(0)
        self.model_id = model_id
        self._model = SentenceTransformer(model_id, device="cpu")
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        raw = self._model.encode(
            list(texts),
            convert_to_numpy=True,
            normalize_embeddings=False,
            batch_size=32,
            show_progress_bar=False,
        )
        return np.asarray(raw, dtype=np.float64).reshape(len(texts), self.dim)


def load_encoder(model_id: str) -> Encoder:
    """`hash:<dim>` gives the weight-free encoder; anything else is treated
    as a sentence-transformers model name or path."""
    if model_id.startswith(HASH_PREFIX):
        return HashEncoder(dim=int(model_id[len(HASH_PREFIX):]), model_id=model_id)
    return SentenceTransformerEncoder(model_id)
