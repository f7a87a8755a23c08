import random

import pytest

from hilrag import HashProvider, KnowledgeDocument, TripletRecord


@pytest.fixture
def provider():
    return HashProvider(64)


def make_docs(n=10, seed=0):
    rng = random.Random(seed)
    words = ["wiper", "speed", "door", "lamp", "ecu", "can", "signal", "bus",
             "test", "bench", "relay", "sensor", "display", "torque", "brake"]
    docs = []
    for i in range(n):
        body = " ".join(rng.choice(words) for _ in range(12))
        docs.append(KnowledgeDocument(
            id=f"REQ-{i:03d}",
            title=f"Requirement {i}",
            requirements=f"{body} case {i}",
            category="exterior" if i % 2 == 0 else "interior",
            sequences=(f"step one for {i}", f"step two for {i}"),
            metadata={"module_id": f"M{i % 3}"},
        ))
    return docs


@pytest.fixture
def docs():
    return make_docs()


def separable_fixture(n=80, n_keywords=20, n_fillers=24, seed=5):
    """Positives share an injected keyword with their anchors; negatives share
    only filler tokens, so an identity adapter ranks them above positives."""
    rng = random.Random(seed)
    keywords = [f"kw{c:02d}" for c in range(n_keywords)]
    fillers = [f"fill{j:02d}" for j in range(n_fillers)]
    recs = []
    for i in range(n):
        kw = keywords[i % n_keywords]
        anchor_fill = rng.sample(fillers, 3)
        positive_fill = rng.sample(fillers, 3)
        negative_fill = anchor_fill + [rng.choice(fillers)]
        recs.append(TripletRecord(
            anchor=f"{kw} " + " ".join(anchor_fill),
            positive=f"{kw} " + " ".join(positive_fill),
            negative=" ".join(negative_fill),
            provenance="synthetic",
        ))
    return recs


@pytest.fixture
def separable_triplets():
    return separable_fixture()
