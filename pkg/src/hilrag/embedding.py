"""Base embeddings, cosine similarity, and the trainable adapter.

The hash provider is a deterministic feature-hashing embedder (FNV-1a-64
buckets with a sign bit) used as the frozen base in tests and at desk
scale; transformer encoders plug in through the external HTTP provider.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteWeights, ProviderFailure

DEFAULT_DIMENSION = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_SPLIT = re.compile(r"[^0-9a-zA-Z]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; the shared tokenizer for hashing and mining."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    normalized: bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if not np.all(np.isfinite(v)):
            raise NonFiniteWeights("non-finite embedding entries")

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def _normalize(values: np.ndarray) -> EmbeddingVector:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return EmbeddingVector(values=values, normalized=False)
    return EmbeddingVector(values=values / norm, normalized=True)


def hash_embed(text: str, dimension: int = DEFAULT_DIMENSION) -> EmbeddingVector:
    """Deterministic feature-hashing embedding, bit-exact across platforms."""
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    acc = np.zeros(dimension, dtype=np.float64)
    for token in tokenize(text):
        h = fnv1a64(token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % dimension] += sign
    return _normalize(acc)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1]; zero vectors score 0 against anything."""
    if u.dimension != v.dimension:
        raise DimensionMismatch(f"{u.dimension} != {v.dimension}")
    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u.values, v.values) / (nu * nv), -1.0, 1.0))


@dataclass(frozen=True)
class AdapterModel:
    """Square matrix applied on top of frozen base embeddings."""

    weights: np.ndarray
    base_id: str
    epochs_trained: int = 0
    config_digest: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch("adapter weights must be a square matrix")
        if not np.all(np.isfinite(w)):
            raise NonFiniteWeights("adapter weights contain non-finite entries")

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])

    @classmethod
    def identity(cls, dimension: int, base_id: str = "hash") -> "AdapterModel":
        return cls(weights=np.eye(dimension), base_id=base_id)

    def save(self, path):
        payload = {
            "format": "hilrag-adapter-v1",
            "dimension": self.dimension,
            "base_id": self.base_id,
            "epochs_trained": self.epochs_trained,
            "config_digest": self.config_digest,
            "weights": self.weights.reshape(-1).tolist(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)

    @classmethod
    def load(cls, path) -> "AdapterModel":
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("format") != "hilrag-adapter-v1":
            raise ValueError("unrecognized adapter file format")
        d = payload["dimension"]
        return cls(
            weights=np.array(payload["weights"], dtype=np.float64).reshape(d, d),
            base_id=payload["base_id"],
            epochs_trained=payload["epochs_trained"],
            config_digest=payload["config_digest"],
        )


def apply_adapter(model: AdapterModel, v: EmbeddingVector) -> EmbeddingVector:
    """L2-normalized W.v; zero input stays zero."""
    if model.dimension != v.dimension:
        raise DimensionMismatch(f"{model.dimension} != {v.dimension}")
    if v.is_zero:
        return v
    out = model.weights @ v.values
    # already-normalized fixed points (identity adapter) pass through bit-exact
    if v.normalized and np.array_equal(out, v.values):
        return v
    return _normalize(out)


@dataclass(frozen=True)
class EmbeddingProviderDescriptor:
    kind: str  # "hash" or "external"
    dimension: int = DEFAULT_DIMENSION
    endpoint: str | None = None
    max_retries: int = 2

    def __post_init__(self):
        if self.kind not in ("hash", "external"):
            raise ValueError(f"unknown provider kind: {self.kind}")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external provider requires an endpoint")

    @property
    def base_id(self) -> str:
        if self.kind == "hash":
            return f"hash-{self.dimension}"
        return f"external-{self.endpoint}"


class HashProvider:
    """Deterministic base embedder; safe to share across threads."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension
        self.base_id = f"hash-{dimension}"

    def embed(self, text: str) -> EmbeddingVector:
        return hash_embed(text, self.dimension)


class ExternalProvider:
    """HTTP embedding service: POST {"input": [texts]} -> {"data": [{"embedding": [...]}]}."""

    def __init__(self, descriptor: EmbeddingProviderDescriptor, token: str | None = None):
        self.descriptor = descriptor
        self.dimension = descriptor.dimension
        self.base_id = descriptor.base_id
        self._token = token  # never logged

    def embed(self, text: str) -> EmbeddingVector:
        import httpx

        headers = {}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        last = None
        for attempt in range(self.descriptor.max_retries + 1):
            try:
                resp = httpx.post(
                    self.descriptor.endpoint, json={"input": [text]},
                    headers=headers, timeout=30.0,
                )
                resp.raise_for_status()
                values = np.array(resp.json()["data"][0]["embedding"], dtype=np.float64)
                if values.shape[0] != self.dimension:
                    raise DimensionMismatch(
                        f"provider returned dimension {values.shape[0]}"
                    )
                return _normalize(values)
            except DimensionMismatch:
                raise
            except Exception as e:  # network / schema errors retried
                last = e
        raise ProviderFailure(str(last), retries=self.descriptor.max_retries)


def build_provider(descriptor: EmbeddingProviderDescriptor, token: str | None = None):
    if descriptor.kind == "hash":
        return HashProvider(descriptor.dimension)
    return ExternalProvider(descriptor, token=token)


def embed_text(provider, text: str, adapter: AdapterModel | None = None) -> EmbeddingVector:
    """Base embedding, pushed through the adapter when one is configured."""
    if adapter is not None and adapter.dimension != provider.dimension:
        raise DimensionMismatch(
            f"adapter dimension {adapter.dimension} != provider {provider.dimension}"
        )
    base = provider.embed(text)
    if adapter is None:
        return base
    return apply_adapter(adapter, base)


def config_digest(obj) -> str:
    """Stable short digest of any JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
