"""Measurement machinery: budget-constrained hit rates, threshold sweeps,
time-travel regression finding, Cohen's kappa, and bootstrap intervals.

Retrievers are plugged in as callables so every experiment runs identically
over the distilled store and over the lexical baselines.
"""
from __future__ import annotations

import csv
import json
import math
import random
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import gitio
from .baselines import bm25_query, build_bm25_index, grep_search
from .extraction import (
    DEFAULT_RULES,
    HeuristicRule,
    KnowledgeUnit,
    extract_commit_units,
)
from .gitio import Commit
from .retrieval import DEFAULT_BOOSTS, DEFAULT_THETA, EVAL_K, BoostTable, build_index, query

QUERY_CLASSES = ("ANSWERABLE", "NOT_IN_CORPUS", "OOD", "FACT_STYLE")
LABEL_CLASSES = ("useful", "trivially-true", "fragment", "noise")
LABEL_FIELDS = ("unit_id", "annotator_a", "annotator_b", "adjudicated")

BUG_FIX_RE = re.compile(r"\b(?:fix(?:es|ed)?|bug|regression|crash|fault)\b", re.IGNORECASE)

DEFAULT_BUDGETS = (64, 128, 256, 512, 1024, 2048)
DEFAULT_THETA_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
DEFAULT_WINDOW = 5000

# A retriever maps a query to a ranked list of candidate texts (budget
# experiments) or, for time travel, (window, query) to ranked commit shas.
TextRetriever = Callable[[str], list[str]]
CommitRetriever = Callable[[list[Commit], str], list[str]]


class InsufficientFixes(RuntimeError):
    """The repository has fewer qualifying bug-fix commits than requested."""


@dataclass
class BenchQuery:
    query: str
    answer_span: str
    query_class: str
    subject_repo: str = ""

    def __post_init__(self) -> None:
        if self.query_class not in QUERY_CLASSES:
            raise ValueError(f"unknown query class: {self.query_class!r}")
        needs_span = self.query_class in ("ANSWERABLE", "FACT_STYLE")
        if needs_span and not self.answer_span:
            raise ValueError(f"{self.query_class} query {self.query!r} needs an answer span")
        if not needs_span and self.answer_span:
            raise ValueError(f"{self.query_class} query {self.query!r} must not carry a span")


@dataclass
class LabelRecord:
    unit_id: str
    annotator_a: str
    annotator_b: str
    adjudicated: str

    def __post_init__(self) -> None:
        for label in (self.annotator_a, self.annotator_b, self.adjudicated):
            if label not in LABEL_CLASSES:
                raise ValueError(f"label {label!r} outside the four-class rubric")


@dataclass
class TimeTravelCase:
    fix: Commit
    window: list[Commit]
    ground_truth: set[str] = field(default_factory=set)


def budget_pack(candidates: Sequence[str], budget: float) -> list[str]:
    """Greedy skip-and-continue packing of ranked candidates into a budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    packed: list[str] = []
    remaining = budget
    for text in candidates:
        if len(text) <= remaining:
            packed.append(text)
            remaining -= len(text)
    return packed


def budget_hit(packed: Sequence[str], answer_span: str) -> bool:
    """Case-insensitive substring containment over the packed candidates."""
    if not answer_span:
        raise ValueError("answer_span must be nonempty")
    needle = answer_span.lower()
    return any(needle in text.lower() for text in packed)


def jackknife_min(per_query_hits: Sequence[bool]) -> float:
    """Smallest hit-rate over the leave-one-out subsets."""
    n = len(per_query_hits)
    if n < 2:
        raise ValueError("jackknife needs at least two queries")
    total = sum(bool(hit) for hit in per_query_hits)
    return min((total - int(bool(hit))) / (n - 1) for hit in per_query_hits)


def budget_sweep(
    queries: Sequence[BenchQuery],
    retrievers: dict[str, TextRetriever],
    budgets: Sequence[float] = DEFAULT_BUDGETS,
) -> dict[str, dict]:
    """Hit-rate per (retriever, budget) over top-10 rankings, plus the
    unconstrained Hit@10 and median top-1 length rows."""
    results: dict[str, dict] = {}
    for name, retrieve in retrievers.items():
        rankings = [retrieve(bench.query)[:EVAL_K] for bench in queries]
        per_query_hits: dict[float, list[bool]] = {}
        for budget in budgets:
            per_query_hits[budget] = [
                budget_hit(budget_pack(ranked, budget), bench.answer_span)
                for ranked, bench in zip(rankings, queries)
            ]
        unconstrained = [
            budget_hit(ranked, bench.answer_span) if ranked else False
            for ranked, bench in zip(rankings, queries)
        ]
        top1_lengths = [len(ranked[0]) for ranked in rankings if ranked]
        results[name] = {
            "per_query_hits": per_query_hits,
            "hit_rate_by_budget": {
                budget: sum(hits) / len(hits) for budget, hits in per_query_hits.items()
            },
            "unconstrained_hit_at_10": sum(unconstrained) / len(unconstrained),
            "median_top1_length": float(statistics.median(top1_lengths)) if top1_lengths else 0.0,
        }
    return results


def threshold_sweep(
    units: Sequence[KnowledgeUnit],
    queries: Sequence[BenchQuery],
    theta_grid: Sequence[float] = DEFAULT_THETA_GRID,
    k: int = EVAL_K,
    boosts: BoostTable = DEFAULT_BOOSTS,
) -> list[dict]:
    """Per-class fraction of queries returning at least one hit, per theta.

    The caller picks the corpus (regex-only vs fallback-augmented), which is
    what distinguishes the two extraction modes in the sweep.
    """
    index = build_index(units)
    by_class: dict[str, list[BenchQuery]] = {}
    for bench in queries:
        by_class.setdefault(bench.query_class, []).append(bench)
    rows: list[dict] = []
    for theta in theta_grid:
        row: dict = {"theta": theta}
        for cls in sorted(by_class):
            members = by_class[cls]
            hits = sum(1 for bench in members if query(index, bench.query, k=k, theta=theta, boosts=boosts))
            row[cls] = hits / len(members)
        rows.append(row)
    return rows


def rank_metrics(rankings: Sequence[Sequence[str]], truths: Sequence[set[str]]) -> dict[str, float]:
    """Hit@1/3/10 and MRR over ranked sha lists; ranks beyond 10 score 0."""
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths must align")
    n = len(rankings)
    if n == 0:
        raise ValueError("no cases to evaluate")
    hits = {1: 0, 3: 0, 10: 0}
    reciprocal = 0.0
    for ranked, truth in zip(rankings, truths):
        best = None
        for position, sha in enumerate(ranked[:10], start=1):
            if sha in truth:
                best = position
                break
        if best is not None:
            reciprocal += 1.0 / best
            for cutoff in hits:
                if best <= cutoff:
                    hits[cutoff] += 1
    return {
        "hit_at_1": hits[1] / n,
        "hit_at_3": hits[3] / n,
        "hit_at_10": hits[10] / n,
        "mrr": reciprocal / n,
    }


def time_travel_cases(
    repo_path,
    n_fixes: int,
    window_size: int = DEFAULT_WINDOW,
) -> list[TimeTravelCase]:
    """Most recent bug-fix commits with at least one prior co-changing fix.

    For each selected fix the window holds the ``window_size`` commits whose
    author dates are strictly earlier; ground truth is the window subset that
    both matches the bug-fix selector and shares a changed file with the fix.
    """
    commits = gitio.list_commits(repo_path, max_count=10**9)
    files = gitio.changed_files_map(repo_path)
    for commit in commits:
        commit.changed_files = files.get(commit.sha, set())
    cases: list[TimeTravelCase] = []
    for fix in commits:
        if len(cases) == n_fixes:
            break
        if not BUG_FIX_RE.search(fix.subject):
            continue
        cutoff = fix.author_datetime()
        window = [
            c for c in commits if c.sha != fix.sha and c.author_datetime() < cutoff
        ][:window_size]
        truth = {
            c.sha
            for c in window
            if BUG_FIX_RE.search(c.subject) and c.changed_files & fix.changed_files
        }
        if not truth:
            continue
        cases.append(TimeTravelCase(fix, window, truth))
    if len(cases) < n_fixes:
        raise InsufficientFixes(
            f"found {len(cases)} qualifying bug-fix commits, needed {n_fixes}"
        )
    return cases


def time_travel_eval(
    repo_path,
    n_fixes: int,
    window_size: int,
    retriever: CommitRetriever,
) -> dict[str, float]:
    """Run a retriever over every case; all state derives from pre-fix commits."""
    cases = time_travel_cases(repo_path, n_fixes, window_size)
    rankings = [
        retriever(case.window, gitio.clean_subject(case.fix.subject))[:10] for case in cases
    ]
    metrics = rank_metrics(rankings, [case.ground_truth for case in cases])
    metrics["n_fixes"] = float(len(cases))
    return metrics


def cd_retriever(
    fallback_enabled: bool = True,
    theta: float = DEFAULT_THETA,
    boosts: BoostTable = DEFAULT_BOOSTS,
    rules: tuple[HeuristicRule, ...] = DEFAULT_RULES,
) -> CommitRetriever:
    """Distilled-store retriever; candidates resolve to their source commits."""
    unit_cache: dict[str, list[KnowledgeUnit]] = {}

    def run(window: list[Commit], query_text: str) -> list[str]:
        short_to_full = {commit.short_sha: commit.sha for commit in window}
        by_id: dict[str, KnowledgeUnit] = {}
        for commit in window:
            if commit.sha not in unit_cache:
                unit_cache[commit.sha] = extract_commit_units(commit, rules, fallback_enabled)
            for unit in unit_cache[commit.sha]:
                by_id.setdefault(unit.id, unit)
        index = build_index([by_id[uid] for uid in sorted(by_id)])
        hits = query(index, query_text, k=max(50, EVAL_K), theta=theta, boosts=boosts)
        shas: list[str] = []
        for hit in hits:
            full = short_to_full.get(hit.unit.meta.get("commit", ""))
            if full and full not in shas:
                shas.append(full)
            if len(shas) == EVAL_K:
                break
        return shas

    return run


def bm25_retriever(k1: float = 1.5, b: float = 0.75) -> CommitRetriever:
    tf_cache: dict[str, Counter] = {}

    def run(window: list[Commit], query_text: str) -> list[str]:
        index = build_bm25_index(window, k1=k1, b=b, tf_cache=tf_cache)
        return [commit.sha for commit, _ in bm25_query(index, query_text, k=EVAL_K)]

    return run


def grep_retriever() -> CommitRetriever:
    def run(window: list[Commit], query_text: str) -> list[str]:
        return [commit.sha for commit, _ in grep_search(window, query_text, k=EVAL_K)]

    return run


def cohen_kappa(labels_a: Sequence[str], labels_b: Sequence[str]) -> float:
    """Chance-corrected agreement; expected agreement from marginal products."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label sequences must have equal length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("label sequences must be nonempty")
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    expected = sum(
        counts_a[category] * counts_b[category] for category in set(counts_a) | set(counts_b)
    ) / (n * n)
    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)


def bootstrap_ci(
    samples: Sequence[float],
    statistic: Callable[[Sequence[float]], float],
    resamples: int = 10000,
    level: float = 0.95,
    seed: int = 42,
) -> tuple[float, float]:
    """Percentile bootstrap interval over with-replacement resamples."""
    if not samples:
        raise ValueError("samples must be nonempty")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    rng = random.Random(seed)
    n = len(samples)
    values = sorted(
        statistic([samples[rng.randrange(n)] for _ in range(n)]) for _ in range(resamples)
    )
    alpha = (1.0 - level) / 2.0
    lo_index = int(math.floor(alpha * resamples))
    hi_index = min(resamples - 1, int(math.ceil((1.0 - alpha) * resamples)) - 1)
    return values[lo_index], values[hi_index]


def derive_queries(commits: Sequence[Commit], n: int) -> list[str]:
    """Cleaned recent commit subjects, minus bot/release/merge noise."""
    queries: list[str] = []
    for commit in commits:
        if len(queries) == n:
            break
        if gitio.is_bot_release_or_merge_subject(commit.subject):
            continue
        cleaned = gitio.clean_subject(commit.subject)
        if not cleaned:
            continue
        queries.append(cleaned)
    return queries


def load_benchmark(path: Path | str) -> list[BenchQuery]:
    """JSON array of {query, answer_span, query_class, subject_repo} objects."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError(f"benchmark file {path} must hold a JSON array")
    return [
        BenchQuery(
            query=entry["query"],
            answer_span=entry.get("answer_span", ""),
            query_class=entry["query_class"],
            subject_repo=entry.get("subject_repo", ""),
        )
        for entry in payload
    ]


def load_labels(path: Path | str) -> list[LabelRecord]:
    """CSV with header unit_id,annotator_a,annotator_b,adjudicated."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != LABEL_FIELDS:
            raise ValueError(
                f"labels file {path} must carry the header {','.join(LABEL_FIELDS)}"
            )
        return [
            LabelRecord(
                unit_id=row["unit_id"],
                annotator_a=row["annotator_a"],
                annotator_b=row["annotator_b"],
                adjudicated=row["adjudicated"],
            )
            for row in reader
        ]


def verify_manifest(manifest: Sequence[dict]) -> list[dict]:
    """Check that every pinned repository sits at its pinned sha.

    Entries are {name, path, sha}; a mismatch raises ValueError so stale
    snapshots never masquerade as reference reproductions.
    """
    verified: list[dict] = []
    for entry in manifest:
        path = entry["path"]
        pinned = entry["sha"].lower()
        head = gitio.head_sha(path).lower()
        if not head.startswith(pinned):
            raise ValueError(
                f"snapshot {entry.get('name', path)} is at {head[:12]}, manifest pins {pinned[:12]}"
            )
        verified.append({**entry, "head": head})
    return verified
