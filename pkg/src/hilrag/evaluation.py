"""Metric machinery: triplet accuracy (strict ranking), top-1 retrieval
accuracy with top-k containment, grounded-query selection, attribution
accuracy, and cross-model report comparison.

Accuracies are kept as exact counts; percentages are formatted to two
decimals only at presentation time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .embedding import cosine, embed_text
from .errors import ClientFailure, EmptyDataset, MissingNegative, UnknownTrueId

TOPK_LEVELS = (1, 3, 5)


@dataclass(frozen=True)
class EvalQuery:
    query: str
    true_doc_id: str


@dataclass(frozen=True)
class TripletEvalReport:
    n: int
    correct: int

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.correct, self.n)

    @property
    def accuracy_pct(self) -> str:
        return f"{float(self.accuracy) * 100:.2f}"

    def to_json_obj(self) -> dict:
        return {"metric": "triplet_accuracy", "n": self.n, "correct": self.correct,
                "accuracy": float(self.accuracy), "accuracy_pct": self.accuracy_pct}


@dataclass(frozen=True)
class RetrievalEvalReport:
    n: int
    top1_correct: int
    topk_contained: dict[int, int] = field(default_factory=dict)

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.top1_correct, self.n)

    @property
    def accuracy_pct(self) -> str:
        return f"{float(self.accuracy) * 100:.2f}"

    def to_json_obj(self) -> dict:
        return {
            "metric": "top1_accuracy", "n": self.n,
            "top1_correct": self.top1_correct,
            "topk_contained": {str(k): v for k, v in self.topk_contained.items()},
            "accuracy": float(self.accuracy), "accuracy_pct": self.accuracy_pct,
        }


def triplet_accuracy(provider, triplets, adapter=None) -> TripletEvalReport:
    """A triplet is correct iff cos(a,p) > cos(a,n) strictly; ties lose."""
    triplets = list(triplets)
    if not triplets:
        raise EmptyDataset("no triplets to evaluate")
    correct = 0
    cache: dict[str, object] = {}

    def emb(text):
        v = cache.get(text)
        if v is None:
            v = embed_text(provider, text, adapter)
            cache[text] = v
        return v

    for i, rec in enumerate(triplets):
        if rec.negative is None:
            raise MissingNegative(i)
        a = emb(rec.anchor)
        if cosine(a, emb(rec.positive)) > cosine(a, emb(rec.negative)):
            correct += 1
    return TripletEvalReport(n=len(triplets), correct=correct)


def top1_accuracy(index, provider, queries, adapter=None) -> RetrievalEvalReport:
    """Top-1 indicator per query, plus top-k containment for k in 1/3/5."""
    queries = list(queries)
    if not queries:
        raise EmptyDataset("no eval queries")
    top1 = 0
    contained = {k: 0 for k in TOPK_LEVELS}
    max_k = max(TOPK_LEVELS)
    for q in queries:
        if index.entry(q.true_doc_id) is None:
            raise UnknownTrueId(q.query, q.true_doc_id)
        hits = index.search_topk(embed_text(provider, q.query, adapter), max_k)
        ids = [h.doc_id for h in hits]
        if ids and ids[0] == q.true_doc_id:
            top1 += 1
        for k in TOPK_LEVELS:
            if q.true_doc_id in ids[:k]:
                contained[k] += 1
    return RetrievalEvalReport(n=len(queries), top1_correct=top1,
                               topk_contained=contained)


def select_grounded_queries(index, provider, queries, k: int = 5, adapter=None):
    """Queries whose true document appears in the dense top-k."""
    selected = []
    for q in queries:
        if index.entry(q.true_doc_id) is None:
            raise UnknownTrueId(q.query, q.true_doc_id)
        hits = index.search_topk(embed_text(provider, q.query, adapter), k)
        if any(h.doc_id == q.true_doc_id for h in hits):
            selected.append(q)
    return selected


def attribution_accuracy(pipeline, queries) -> Fraction:
    """Fraction of grounded queries whose answer carries the true doc id in
    its SOURCE line; unattributed answers count as incorrect."""
    queries = list(queries)
    if not queries:
        raise EmptyDataset("no grounded queries")
    correct = 0
    done = 0
    try:
        for q in queries:
            result = pipeline.answer(q.query)
            attributed = (result.generation.attributed_doc_id
                          if result.generation else None)
            if attributed == q.true_doc_id:
                correct += 1
            done += 1
    except ClientFailure as e:
        raise ClientFailure(
            f"aborted after {done}/{len(queries)} queries (partial results "
            f"invalid): {e}") from e
    return Fraction(correct, len(queries))


@dataclass(frozen=True)
class LabeledReport:
    label: str
    accuracy_pct: float
    params_m: float | None = None


def compare_reports(reports) -> tuple[str, list[str]]:
    """Aligned comparison of labeled accuracy reports.

    Returns (human-readable table, line-delimited JSON rows). Rows are
    sorted by accuracy descending with label as a stable tie-break; the
    delta column is measured against the lowest-scoring row.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least 2 reports to compare")
    rows = sorted(reports, key=lambda r: (-r.accuracy_pct, r.label))
    baseline = min(r.accuracy_pct for r in rows)
    label_w = max(len("model"), max(len(r.label) for r in rows))
    lines = [
        f"{'model':<{label_w}}  {'params(M)':>9}  {'acc(%)':>7}  {'delta':>7}",
        "-" * (label_w + 29),
    ]
    jsonl = []
    for r in rows:
        params = f"{r.params_m:.2f}" if r.params_m is not None else "---"
        delta = r.accuracy_pct - baseline
        lines.append(
            f"{r.label:<{label_w}}  {params:>9}  {r.accuracy_pct:>7.2f}  "
            f"{delta:>+7.2f}")
        jsonl.append(json.dumps({
            "label": r.label, "params_m": r.params_m,
            "accuracy_pct": round(r.accuracy_pct, 2),
            "delta_pct": round(delta, 2),
        }, sort_keys=True))
    return "\n".join(lines), jsonl
