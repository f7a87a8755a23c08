"""Adapter fitting with contrastive objectives.

Losses operate on cosine similarity between L2-normalized adapter outputs:

    triplet:  max(0, m - cos(a,p) + cos(a,n))
    pairwise: 1 - cos(x,y)            for positive pairs
              max(0, cos(x,y) - m)    for negative pairs

The analytic gradient (including the path through output re-normalization)
is verified against central finite differences; the subgradient at the
hinge kink is 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import TripletRecord
from .embedding import AdapterModel, EmbeddingVector, config_digest, cosine
from .errors import DimensionMismatch, EmptyDataset, InvalidConfig, NonFiniteGradient

LOSS_KINDS = ("triplet", "pairwise")


@dataclass(frozen=True)
class TrainingConfig:
    loss: str = "triplet"
    margin: float = 0.2
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    use_negatives: bool = True

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise InvalidConfig(f"unknown loss: {self.loss}")
        if self.margin < 0:
            raise InvalidConfig("margin must be >= 0")
        if self.learning_rate < 0:
            # 0 is allowed: a no-op run that reports baseline metrics
            raise InvalidConfig("learning_rate must be >= 0")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")

    def digest(self) -> str:
        return config_digest(self.__dict__)


@dataclass
class TrainingHistory:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_accuracy: list[float] | None = None


def triplet_loss(a: EmbeddingVector, p: EmbeddingVector, n: EmbeddingVector,
                 margin: float = 0.2) -> float:
    return max(0.0, margin - cosine(a, p) + cosine(a, n))


def pairwise_loss(x: EmbeddingVector, y: EmbeddingVector, label: str,
                  margin: float = 0.2) -> float:
    if label == "positive":
        return 1.0 - cosine(x, y)
    if label == "negative":
        return max(0.0, cosine(x, y) - margin)
    raise ValueError(f"unknown label: {label}")


def _cos_and_grad(W: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Cosine of normalized (Wx, Wy) and its gradient with respect to W."""
    u = W @ x
    v = W @ y
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0, np.zeros_like(W)
    s = float(u @ v / (nu * nv))
    ds_du = v / (nu * nv) - s * u / (nu * nu)
    ds_dv = u / (nu * nv) - s * v / (nv * nv)
    grad = np.outer(ds_du, x) + np.outer(ds_dv, y)
    return s, grad


def _record_loss_and_grad(W: np.ndarray, a: np.ndarray, p: np.ndarray,
                          n: np.ndarray | None, config: TrainingConfig):
    """Loss and dL/dW for one triplet record under the configured objective.

    Records without a usable negative (absent, or use_negatives=False)
    contribute only the positive-pair term of the pairwise loss.
    """
    m = config.margin
    use_neg = config.use_negatives and n is not None
    if config.loss == "triplet" and use_neg:
        s_ap, g_ap = _cos_and_grad(W, a, p)
        s_an, g_an = _cos_and_grad(W, a, n)
        hinge = m - s_ap + s_an
        if hinge > 0.0:
            return hinge, g_an - g_ap
        return 0.0, np.zeros_like(W)
    # pairwise objective (also the fallback when no negative is available)
    s_ap, g_ap = _cos_and_grad(W, a, p)
    loss = 1.0 - s_ap
    grad = -g_ap
    if config.loss == "pairwise" and use_neg:
        s_an, g_an = _cos_and_grad(W, a, n)
        if s_an - m > 0.0:
            loss += s_an - m
            grad = grad + g_an
    return loss, grad


class _BaseCache:
    """Base vectors are frozen; embed each unique text once per run."""

    def __init__(self, provider):
        self.provider = provider
        self._cache: dict[str, np.ndarray] = {}

    def get(self, text: str) -> np.ndarray:
        vec = self._cache.get(text)
        if vec is None:
            vec = self.provider.embed(text).values
            self._cache[text] = vec
        return vec


def batch_loss(W: np.ndarray, batch, cache: _BaseCache, config: TrainingConfig) -> float:
    total = 0.0
    for rec in batch:
        n = cache.get(rec.negative) if rec.negative is not None else None
        loss, _ = _record_loss_and_grad(
            W, cache.get(rec.anchor), cache.get(rec.positive), n, config)
        total += loss
    return total / len(batch)


def loss_gradient(model: AdapterModel, batch, provider,
                  config: TrainingConfig) -> np.ndarray:
    """Analytic gradient of the mean batch loss with respect to W."""
    if not batch:
        raise EmptyDataset("empty batch")
    cache = provider if isinstance(provider, _BaseCache) else _BaseCache(provider)
    W = model.weights
    grad = np.zeros_like(W)
    for rec in batch:
        n = cache.get(rec.negative) if rec.negative is not None else None
        _, g = _record_loss_and_grad(
            W, cache.get(rec.anchor), cache.get(rec.positive), n, config)
        grad += g
    grad /= len(batch)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains non-finite entries")
    return grad


def finite_difference_check(model: AdapterModel, record: TripletRecord, provider,
                            config: TrainingConfig, eps: float = 1e-4,
                            max_entries: int = 100, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every weight entry for D <= 32, otherwise a seeded random subset
    of at least ``max_entries`` entries.
    """
    if eps <= 0:
        raise InvalidConfig("eps must be > 0")
    cache = _BaseCache(provider)
    analytic = loss_gradient(model, [record], cache, config)
    D = model.dimension
    if D <= 32:
        entries = [(i, j) for i in range(D) for j in range(D)]
    else:
        rng = random.Random(seed)
        entries = [(rng.randrange(D), rng.randrange(D))
                   for _ in range(max(max_entries, 100))]
    W = model.weights.copy()
    worst = 0.0
    for i, j in entries:
        orig = W[i, j]
        W[i, j] = orig + eps
        lp = batch_loss(W, [record], cache, config)
        W[i, j] = orig - eps
        lm = batch_loss(W, [record], cache, config)
        W[i, j] = orig
        numeric = (lp - lm) / (2 * eps)
        err = abs(analytic[i, j] - numeric) / max(abs(analytic[i, j]),
                                                  abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def _benchmark_accuracy(W: np.ndarray, triplets, cache: _BaseCache) -> float:
    correct = 0
    total = 0
    for rec in triplets:
        if rec.negative is None:
            continue
        total += 1
        s_ap, _ = _cos_and_grad(W, cache.get(rec.anchor), cache.get(rec.positive))
        s_an, _ = _cos_and_grad(W, cache.get(rec.anchor), cache.get(rec.negative))
        if s_ap > s_an:
            correct += 1
    return correct / total if total else 0.0


def train_adapter(provider, triplets, config: TrainingConfig = TrainingConfig(),
                  benchmark=None) -> tuple[AdapterModel, TrainingHistory]:
    """Plain gradient descent from the identity adapter; deterministic for a
    fixed (inputs, config). ``benchmark`` triplets, when given, are scored
    for accuracy after every epoch."""
    triplets = list(triplets)
    if not triplets:
        raise EmptyDataset("no training triplets")
    cache = _BaseCache(provider)
    D = provider.dimension
    W = np.eye(D)
    rng = random.Random(config.seed)
    history = TrainingHistory(
        epoch_accuracy=[] if benchmark is not None else None)
    indices = list(range(len(triplets)))
    for _ in range(config.epochs):
        rng.shuffle(indices)
        epoch_total = 0.0
        for start in range(0, len(indices), config.batch_size):
            batch = [triplets[i] for i in indices[start:start + config.batch_size]]
            grad = np.zeros_like(W)
            for rec in batch:
                n = cache.get(rec.negative) if rec.negative is not None else None
                loss, g = _record_loss_and_grad(
                    W, cache.get(rec.anchor), cache.get(rec.positive), n, config)
                epoch_total += loss
                grad += g
            grad /= len(batch)
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradient("gradient blow-up; training aborted")
            W = W - config.learning_rate * grad
        history.epoch_loss.append(epoch_total / len(triplets))
        if benchmark is not None:
            history.epoch_accuracy.append(_benchmark_accuracy(W, benchmark, cache))
    model = AdapterModel(
        weights=W,
        base_id=provider.base_id,
        epochs_trained=config.epochs,
        config_digest=config.digest(),
    )
    return model, history
