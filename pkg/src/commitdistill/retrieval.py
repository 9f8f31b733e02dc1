"""Length-normalized TF-IDF retrieval with type boosts and a silence threshold.

Scoring: for each document sharing at least one term with the query,

    s = sum over shared terms of (1 + log tf_d) * (1 + log tf_q) * idf
    s = s / sqrt(max(1, |d|))
    s = s * boost[type] * (0.5 + 0.5 * weight)

and only documents with s >= theta are returned. An empty result is the
abstention contract, not an error.
"""
from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass

from .extraction import KnowledgeUnit, truncate_at_word

_WORD_RE = re.compile(r"\w+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")

HYBRID_BODY_BUDGET = 140
HYBRID_BODY_LINES = 3


@dataclass(frozen=True)
class BoostTable:
    """Per-type score multipliers; failure-mode knowledge ranks highest."""

    pattern: float = 1.2
    skill: float = 1.1
    fact: float = 1.0

    def __post_init__(self) -> None:
        if min(self.pattern, self.skill, self.fact) <= 0:
            raise ValueError("boost multipliers must be positive")

    def for_type(self, unit_type: str) -> float:
        return getattr(self, unit_type)


DEFAULT_BOOSTS = BoostTable()
NEUTRAL_BOOSTS = BoostTable(pattern=1.0, skill=1.0, fact=1.0)

DEFAULT_K = 3
EVAL_K = 10
DEFAULT_THETA = 2.5


@dataclass
class RankedHit:
    unit: KnowledgeUnit
    score: float


@dataclass
class IndexedDocument:
    unit: KnowledgeUnit
    tf: Counter
    length: int


@dataclass
class RetrievalIndex:
    """Immutable after build; safe to share across read-only queries."""

    documents: list[IndexedDocument]
    idf: dict[str, float]
    postings: dict[str, list[int]]


def split_identifier(token: str) -> list[str]:
    """camelCase / snake_case / ALL_CAPS pieces, letter-digit splits included."""
    parts: list[str] = []
    for piece in token.split("_"):
        parts.extend(_CAMEL_RE.findall(piece))
    return parts


def tokenize(text: str) -> Counter:
    """Lower-cased word tokens; identifiers also contribute their pieces.

    A decomposable identifier keeps its original (lower-cased) form alongside
    the constituent words; purely numeric pieces are dropped.
    """
    counts: Counter = Counter()
    for raw in _WORD_RE.findall(text):
        lowered = raw.lower()
        parts = split_identifier(raw)
        decomposed = len(parts) > 1 or (parts and parts[0].lower() != lowered)
        counts[lowered] += 1
        if decomposed:
            for part in parts:
                if not part.isdigit():
                    counts[part.lower()] += 1
    return counts


def build_index(units) -> RetrievalIndex:
    """TF, IDF, and doc lengths over unit contents; idf = log(N / df).

    A single-document corpus gets add-one smoothing (log((N+1)/df)) so the
    degenerate corpus stays retrievable.
    """
    documents: list[IndexedDocument] = []
    for unit in units:
        tf = tokenize(unit.content)
        documents.append(IndexedDocument(unit, tf, sum(tf.values())))
    n = len(documents)
    df: Counter = Counter()
    postings: dict[str, list[int]] = defaultdict(list)
    for idx, doc in enumerate(documents):
        for term in doc.tf:
            df[term] += 1
            postings[term].append(idx)
    numerator = n + 1 if n == 1 else n
    idf = {term: math.log(numerator / count) for term, count in df.items()}
    return RetrievalIndex(documents, idf, dict(postings))


def query(
    index: RetrievalIndex,
    q: str,
    k: int = DEFAULT_K,
    theta: float = DEFAULT_THETA,
    boosts: BoostTable = DEFAULT_BOOSTS,
) -> list[RankedHit]:
    """Top-k hits scoring at least theta; ties break on ascending unit id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if theta < 0:
        raise ValueError("theta must be >= 0")
    query_tf = tokenize(q)
    if not query_tf:
        return []
    candidates: set[int] = set()
    for term in query_tf:
        candidates.update(index.postings.get(term, ()))
    hits: list[RankedHit] = []
    for doc_index in candidates:
        doc = index.documents[doc_index]
        score = 0.0
        for term, query_freq in query_tf.items():
            doc_freq = doc.tf.get(term)
            if doc_freq:
                score += (
                    (1.0 + math.log(doc_freq))
                    * (1.0 + math.log(query_freq))
                    * index.idf[term]
                )
        score /= math.sqrt(max(1, doc.length))
        score *= boosts.for_type(doc.unit.unit_type) * (0.5 + 0.5 * doc.unit.weight)
        if score >= theta:
            hits.append(RankedHit(doc.unit, score))
    hits.sort(key=lambda hit: (-hit.score, hit.unit.id))
    return hits[:k]


def render_hybrid(hit: RankedHit, commit_body: str) -> str:
    """Typed-claim header plus a capped excerpt of the linked commit body.

    The excerpt draws from at most 3 non-empty body lines and at most 140
    chars, matching the per-item body budget of the raw-prose baseline.
    """
    header = f"{hit.unit.unit_type}:{hit.unit.title}"
    lines = [line.strip() for line in commit_body.splitlines() if line.strip()]
    if not lines:
        return header
    excerpt = truncate_at_word("\n".join(lines[:HYBRID_BODY_LINES]), HYBRID_BODY_BUDGET)
    if not excerpt:
        return header
    return f"{header}\n{excerpt}"
