"""Retrieval-augmented knowledge engine for requirement and test-sequence
corpora: checkpointed ingestion, triplet mining, adapter fine-tuning,
exact cosine indexing, a grounded generation pipeline, and the metric
harnesses that measure it.
"""

from .corpus import KnowledgeDocument, TripletRecord, load_triplets, parse_document
from .embedding import (
    AdapterModel,
    EmbeddingVector,
    HashProvider,
    apply_adapter,
    cosine,
    embed_text,
    hash_embed,
)
from .evaluation import EvalQuery, top1_accuracy, triplet_accuracy
from .pipeline import RagPipeline, RetrievalConfig
from .training import TrainingConfig, train_adapter
from .vindex import VectorIndex, build_index

__all__ = [
    "AdapterModel",
    "EmbeddingVector",
    "EvalQuery",
    "HashProvider",
    "KnowledgeDocument",
    "RagPipeline",
    "RetrievalConfig",
    "TrainingConfig",
    "TripletRecord",
    "VectorIndex",
    "apply_adapter",
    "build_index",
    "cosine",
    "embed_text",
    "hash_embed",
    "load_triplets",
    "parse_document",
    "top1_accuracy",
    "train_adapter",
    "triplet_accuracy",
]
