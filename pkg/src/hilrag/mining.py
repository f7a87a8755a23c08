"""Triplet dataset construction: heuristic positive pairs, hard negatives
picked from an intermediate-similarity rank band, and deterministic
template-based synthesis.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import KnowledgeDocument, TripletRecord
from .embedding import cosine, embed_text, tokenize
from .errors import BandEmpty, GeneratorFailure


@dataclass(frozen=True)
class MiningConfig:
    jaccard_threshold: float = 0.3
    shared_key_fields: tuple[str, ...] = ("module_id", "signals")
    negative_rank_band: tuple[int, int] = (5, 25)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.negative_rank_band
        if not (1 <= lo <= hi):
            raise ValueError("rank band must satisfy 1 <= lo <= hi")
        if not (0.0 <= self.jaccard_threshold <= 1.0):
            raise ValueError("jaccard_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class CandidatePair:
    anchor_id: str
    candidate_id: str
    evidence: str  # "shared_key" | "token_overlap"
    score: float

    def __post_init__(self):
        if self.anchor_id == self.candidate_id:
            raise ValueError("anchor and candidate must differ")


def _key_values(doc: KnowledgeDocument, fields) -> set[str]:
    values: set[str] = set()
    for name in fields:
        v = doc.metadata.get(name)
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            values.update(str(x) for x in v)
        else:
            values.add(str(v))
    return values


def token_jaccard(a: str, b: str) -> float:
    sa, sb = set(tokenize(a)), set(tokenize(b))
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def mine_positive_pairs(corpus, config: MiningConfig = MiningConfig()):
    """Emit a pair when shared-key metadata overlaps or requirement-token
    Jaccard clears the threshold; order is (anchor_id, candidate_id) ascending."""
    docs = sorted(corpus, key=lambda d: d.id)
    pairs: list[CandidatePair] = []
    for i, a in enumerate(docs):
        keys_a = _key_values(a, config.shared_key_fields)
        for b in docs[i + 1:]:
            if keys_a & _key_values(b, config.shared_key_fields):
                pairs.append(CandidatePair(a.id, b.id, "shared_key", 1.0))
                continue
            j = token_jaccard(a.requirements, b.requirements)
            if j >= config.jaccard_threshold:
                pairs.append(CandidatePair(a.id, b.id, "token_overlap", j))
    pairs.sort(key=lambda p: (p.anchor_id, p.candidate_id))
    return pairs


def mine_hard_negatives(
    anchors: dict[str, list[str]],
    pool,
    provider,
    config: MiningConfig = MiningConfig(),
    adapter=None,
):
    """Pick one negative per anchor from the rank band of non-positive pool
    docs sorted by reference-embedder similarity.

    ``anchors`` maps anchor doc id -> list of known-positive doc ids.
    Returns (triplets, skipped) where skipped lists BandEmpty anchors.
    """
    docs = {d.id: d for d in pool}
    vectors = {
        d.id: embed_text(provider, d.searchable_text, adapter) for d in pool
    }
    rng = random.Random(config.seed)
    lo, hi = config.negative_rank_band
    triplets: list[TripletRecord] = []
    skipped: list[BandEmpty] = []
    for anchor_id in sorted(anchors):
        positives = anchors[anchor_id]
        if anchor_id not in docs or not positives:
            continue
        anchor_doc = docs[anchor_id]
        anchor_vec = vectors[anchor_id]
        excluded = set(positives) | {anchor_id}
        scored = sorted(
            (
                (cosine(anchor_vec, vectors[d.id]), d.id)
                for d in pool
                if d.id not in excluded
            ),
            key=lambda t: (-t[0], t[1]),
        )
        if len(scored) < lo:
            skipped.append(BandEmpty(anchor_id))
            continue
        band = scored[lo - 1 : hi]
        _, negative_id = band[rng.randrange(len(band))]
        best_positive = max(
            (p for p in positives if p in docs),
            key=lambda p: cosine(anchor_vec, vectors[p]),
            default=None,
        )
        if best_positive is None:
            continue
        triplets.append(
            TripletRecord(
                anchor=anchor_doc.searchable_text,
                positive=docs[best_positive].searchable_text,
                negative=docs[negative_id].searchable_text,
                provenance="hard-negative",
                source_ids=(anchor_id, best_positive, negative_id),
            )
        )
    return triplets, skipped


# Fixed synonym table for the deterministic template generator.
_SYNONYMS = {
    "verify": "confirm",
    "check": "inspect",
    "activate": "enable",
    "deactivate": "disable",
    "signal": "message",
    "speed": "velocity",
    "test": "validation",
    "sequence": "procedure",
    "requirement": "specification",
    "error": "fault",
}


def _paraphrase(text: str, rng: random.Random) -> str:
    words = text.split()
    out = []
    for w in words:
        key = w.lower().strip(".,;:")
        if key in _SYNONYMS and rng.random() < 0.8:
            out.append(_SYNONYMS[key])
        else:
            out.append(w)
    # clause reordering: rotate around the first comma or mid-point
    if "," in " ".join(out):
        joined = " ".join(out)
        head, _, tail = joined.partition(",")
        return (tail.strip() + ", " + head.strip()) if tail.strip() else joined
    if len(out) > 4 and rng.random() < 0.5:
        mid = len(out) // 2
        out = out[mid:] + out[:mid]
    return " ".join(out)


class TemplateGenerator:
    """Deterministic stand-in for LLM-assisted triplet synthesis."""

    def generate(self, anchor_doc, distractor_doc, rng: random.Random) -> TripletRecord:
        anchor = anchor_doc.requirements
        positive = _paraphrase(anchor, rng)
        if positive == anchor:
            positive = "In short: " + positive
        return TripletRecord(
            anchor=anchor,
            positive=positive,
            negative=distractor_doc.requirements,
            provenance="synthetic",
            source_ids=(anchor_doc.id, distractor_doc.id),
        )


def synthesize_triplets(corpus, n: int, seed: int = 0, generator=None):
    """Generate n synthetic triplets; byte-identical across runs for a seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    docs = sorted(corpus, key=lambda d: d.id)
    if n > 0 and len(docs) < 2:
        raise GeneratorFailure("need at least 2 documents to synthesize triplets")
    generator = generator or TemplateGenerator()
    rng = random.Random(seed)
    triplets: list[TripletRecord] = []
    for i in range(n):
        anchor_doc = docs[i % len(docs)]
        distractor = docs[(i + 1 + rng.randrange(len(docs) - 1)) % len(docs)]
        if distractor.id == anchor_doc.id:
            distractor = docs[(i + 1) % len(docs)]
        try:
            triplets.append(generator.generate(anchor_doc, distractor, rng))
        except GeneratorFailure:
            raise
        except Exception as e:
            raise GeneratorFailure(str(e)) from e
    return triplets
