"""Filtered ranking of link-prediction queries and MR / MRR / Hits@k metrics.

Every triple in a split contributes two queries: the tail query (h, r) whose
answer is t, and the head query expressed through the inverse relation,
(t, r + n_relations) whose answer is h.  Known true candidates other than the
target are removed from the candidate pool before ranking ("filtered"
protocol); the filter set can come from the train split only or from all
three splits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .data import TripleStore, known_tails
from .errors import ConfigError, DataError

FILTER_POLICIES = ("train", "standard")

_POLICY_SPLITS = {
    "train": frozenset({"train"}),
    "standard": frozenset({"train", "valid", "test"}),
}


@dataclass(frozen=True)
class RankResult:
    """One query's filtered rank; fractional when scores tie."""

    entity: int
    relation: int
    target: int
    rank: float


def rank_query(scores: np.ndarray, target: int, filter_ids: Iterable[int]) -> float:
    """Tie-averaged filtered rank of the target among candidates.

    The rank is the mean of the optimistic rank (ties resolved in the
    target's favor) and the pessimistic rank (ties against), computed over
    the candidates that survive filtering.  The target itself must not be
    filtered.
    """
    scores = np.asarray(scores)
    filter_ids = set(filter_ids)
    if target in filter_ids:
        raise DataError(f"target entity {target} is in the filter set")
    keep = np.ones(scores.shape[0], dtype=bool)
    if filter_ids:
        keep[np.fromiter(filter_ids, dtype=np.int64)] = False
    target_score = scores[target]
    kept = scores[keep]
    greater = int(np.sum(kept > target_score))
    equal_others = int(np.sum(kept == target_score)) - 1
    optimistic = 1 + greater
    pessimistic = optimistic + equal_others
    return (optimistic + pessimistic) / 2.0


def split_queries(store: TripleStore, split: str) -> list[tuple[int, int, int]]:
    """(entity, relation, target) queries for a split, both directions."""
    n_rel = store.n_relations
    queries: list[tuple[int, int, int]] = []
    for h, r, t in store.split(split):
        queries.append((h, r, t))
        queries.append((t, r + n_rel, h))
    return queries


def filter_index(store: TripleStore, filter_policy: str) -> dict[tuple[int, int], set[int]]:
    if filter_policy not in FILTER_POLICIES:
        raise ConfigError(
            f"filter policy must be one of {FILTER_POLICIES}, got {filter_policy!r}"
        )
    return known_tails(store, _POLICY_SPLITS[filter_policy])


def metrics_from_ranks(ranks: Iterable[float], ks: tuple[int, ...],
                       filter_policy: str) -> dict:
    ranks = np.asarray(list(ranks), dtype=np.float64)
    if ranks.size == 0:
        raise DataError("no queries to evaluate")
    return {
        "mr": float(ranks.mean()),
        "mrr": float((1.0 / ranks).mean()),
        "hits": {int(k): float((ranks <= k).mean()) for k in ks},
        "n_queries": int(ranks.size),
        "filter_policy": filter_policy,
    }


def evaluate_ranking(score_fn: Callable[[np.ndarray], np.ndarray], store: TripleStore,
                     split: str, filter_policy: str = "standard",
                     ks: tuple[int, ...] = (1, 3, 10), batch_size: int = 512,
                     workers: int = 1) -> dict:
    """Rank every query of a split and reduce to MR, MRR, and Hits@k.

    ``score_fn`` maps an (n, 2) array of (entity, relation) pairs to an
    (n, n_entities) score matrix.  Queries are ranked in a fixed order so
    results do not depend on batching or worker count.
    """
    queries = split_queries(store, split)
    if not queries:
        raise DataError(f"split {split!r} is empty")
    filters = filter_index(store, filter_policy)
    pairs = np.asarray([(e, r) for e, r, _ in queries], dtype=np.int64)
    ranks = np.empty(len(queries), dtype=np.float64)

    def rank_chunk(start: int, stop: int) -> None:
        scores = score_fn(pairs[start:stop])
        for offset, (e, r, target) in enumerate(queries[start:stop]):
            known = filters.get((e, r), set())
            ranks[start + offset] = rank_query(scores[offset], target, known - {target})

    bounds = [(s, min(s + batch_size, len(queries))) for s in range(0, len(queries), batch_size)]
    if workers > 1 and len(bounds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: rank_chunk(*b), bounds))
    else:
        for start, stop in bounds:
            rank_chunk(start, stop)
    return metrics_from_ranks(ranks, ks, filter_policy)


def metrics_to_text(metrics: dict) -> str:
    lines = [
        f"mr\t{metrics['mr']:.6g}",
        f"mrr\t{metrics['mrr']:.6g}",
    ]
    for k in sorted(metrics["hits"]):
        lines.append(f"hits@{k}\t{metrics['hits'][k]:.6g}")
    lines.append(f"n_queries\t{metrics['n_queries']}")
    lines.append(f"filter_policy\t{metrics['filter_policy']}")
    return "\n".join(lines) + "\n"
