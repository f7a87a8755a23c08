import pytest

from hilrag import KnowledgeDocument
from hilrag.mining import (
    MiningConfig,
    TemplateGenerator,
    mine_hard_negatives,
    mine_positive_pairs,
    synthesize_triplets,
    token_jaccard,
)


def doc(id, requirements, **metadata):
    return KnowledgeDocument(id=id, title=f"title {id}",
                             requirements=requirements, category="c",
                             metadata=metadata)


class TestPositivePairs:
    def test_shared_key_field(self):
        docs = [doc("A", "one two", module_id="M7"),
                doc("B", "three four", module_id="M7")]
        pairs = mine_positive_pairs(docs)
        assert len(pairs) == 1
        assert pairs[0].evidence == "shared_key"

    def test_jaccard_threshold(self):
        # {a,b,c,d} vs {a,b,e,f}: 2/6 = 0.333 >= 0.3
        docs = [doc("A", "a b c d"), doc("B", "a b e f")]
        pairs = mine_positive_pairs(docs, MiningConfig(jaccard_threshold=0.3))
        assert len(pairs) == 1
        assert pairs[0].evidence == "token_overlap"
        assert pairs[0].score == pytest.approx(2 / 6)

    def test_below_threshold_not_emitted(self):
        docs = [doc("A", "a b c d"), doc("B", "a x y z")]
        assert mine_positive_pairs(docs, MiningConfig(jaccard_threshold=0.3)) == []

    def test_never_pairs_doc_with_itself(self):
        docs = [doc("A", "a b c d")]
        assert mine_positive_pairs(docs) == []

    def test_deterministic_ascending_order(self):
        docs = [doc(i, "shared tokens body here", module_id="M1")
                for i in ("C", "A", "B")]
        pairs = mine_positive_pairs(docs)
        assert [(p.anchor_id, p.candidate_id) for p in pairs] == [
            ("A", "B"), ("A", "C"), ("B", "C")]

    def test_token_jaccard(self):
        assert token_jaccard("a b", "a b") == 1.0
        assert token_jaccard("", "") == 0.0


def mining_pool(n=12):
    words = ["relay", "clutch", "pedal", "mirror", "horn", "fuse", "valve",
             "gauge", "wiper", "hvac", "radar", "sonar"]
    docs = []
    for i in range(n):
        body = f"{words[i]} control check plus {words[(i + 1) % n]} interaction"
        docs.append(doc(f"D{i:02d}", body))
    return docs


class TestHardNegatives:
    def test_band_selection_and_exclusions(self, provider):
        pool = mining_pool()
        anchors = {"D00": ["D01"]}
        triplets, skipped = mine_hard_negatives(
            anchors, pool, provider, MiningConfig(negative_rank_band=(2, 4), seed=1))
        assert not skipped
        assert len(triplets) == 1
        t = triplets[0]
        assert t.provenance == "hard-negative"
        # negative never among the anchor's known positives (or the anchor)
        assert t.source_ids[2] not in ("D00", "D01")

    def test_band_empty(self, provider):
        pool = mining_pool(4)
        anchors = {"D00": ["D01"]}
        triplets, skipped = mine_hard_negatives(
            anchors, pool, provider, MiningConfig(negative_rank_band=(5, 25)))
        assert triplets == []
        assert len(skipped) == 1 and skipped[0].anchor_id == "D00"

    def test_deterministic_for_seed(self, provider):
        pool = mining_pool()
        anchors = {"D00": ["D01"], "D03": ["D04"], "D07": ["D08"]}
        cfg = MiningConfig(negative_rank_band=(2, 6), seed=42)
        first, _ = mine_hard_negatives(anchors, pool, provider, cfg)
        second, _ = mine_hard_negatives(anchors, pool, provider, cfg)
        assert first == second

    def test_negative_scores_below_best_positive(self, provider):
        from hilrag.embedding import cosine, embed_text

        pool = mining_pool()
        # make the positive strongly similar to the anchor
        pool[1] = doc("D01", pool[0].requirements + " extra")
        anchors = {"D00": ["D01"]}
        triplets, _ = mine_hard_negatives(
            anchors, pool, provider, MiningConfig(negative_rank_band=(2, 5)))
        t = triplets[0]
        a = embed_text(provider, t.anchor)
        assert cosine(a, embed_text(provider, t.negative)) < cosine(
            a, embed_text(provider, t.positive))

    def test_invalid_band(self):
        with pytest.raises(ValueError):
            MiningConfig(negative_rank_band=(0, 3))


class TestSynthesis:
    def test_zero_is_empty(self, docs):
        assert synthesize_triplets(docs, 0) == []

    def test_deterministic_for_seed(self, docs):
        a = synthesize_triplets(docs, 10, seed=3)
        b = synthesize_triplets(docs, 10, seed=3)
        assert a == b

    def test_referential_integrity(self, docs):
        ids = {d.id for d in docs}
        for t in synthesize_triplets(docs, 15, seed=1):
            assert t.provenance == "synthetic"
            assert all(s in ids for s in t.source_ids)

    def test_pluggable_generator(self, docs):
        class Upper(TemplateGenerator):
            def generate(self, anchor_doc, distractor_doc, rng):
                t = super().generate(anchor_doc, distractor_doc, rng)
                return t

        out = synthesize_triplets(docs, 2, seed=0, generator=Upper())
        assert len(out) == 2
