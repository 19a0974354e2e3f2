"""Semi-supervised self-training: generate unverified triples, then retrain.

The condition pairs of the valid/test splits (both query directions) are
scored by a pretrained model; for each pair the best-scoring candidate not
already known from train becomes a new, unverified positive triple.  The
train set is augmented with these generated triples and the model is
retrained with the usual early-stopped loop.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .data import TripleStore, Triple, known_tails
from .errors import DataError
from .model import LinkPredictor

ScoreFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConditionPairSet:
    """Deduplicated (entity, relation) query stubs from chosen source splits."""

    pairs: list[tuple[int, int]]
    source: tuple[str, ...]


def build_condition_pairs(store: TripleStore, source_splits: set[str]) -> ConditionPairSet:
    """Forward and inverse pairs of every triple in the source splits."""
    allowed = {"valid", "test"}
    unknown = set(source_splits) - allowed
    if unknown:
        raise DataError(f"self-training sources must be within {sorted(allowed)}, got {sorted(unknown)}")
    if not source_splits:
        raise DataError("self-training requires at least one source split")
    n_rel = store.n_relations
    seen: set[tuple[int, int]] = set()
    ordered: list[tuple[int, int]] = []
    for name in sorted(source_splits):
        for h, r, t in store.split(name):
            for pair in ((h, r), (t, r + n_rel)):
                if pair not in seen:
                    seen.add(pair)
                    ordered.append(pair)
    if not ordered:
        raise DataError(f"source splits {sorted(source_splits)} contain no triples")
    return ConditionPairSet(pairs=ordered, source=tuple(sorted(source_splits)))


def generate_new_triples(score_fn: ScoreFn, store: TripleStore,
                         pair_set: ConditionPairSet, batch_size: int = 512) -> list[Triple]:
    """Greedy best-candidate generation, one new triple per condition pair.

    Candidates are taken in descending score order, ties broken by ascending
    entity id; the first candidate not already known from the augmented train
    set wins.  A pair whose every candidate is known is skipped with a warning.
    """
    train_known = known_tails(store, {"train"})
    pairs = np.asarray(pair_set.pairs, dtype=np.int64)
    generated: list[Triple] = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        scores = np.asarray(score_fn(chunk))
        for row, (e, r) in enumerate(chunk):
            known = train_known.get((int(e), int(r)), set())
            # stable sort on negated scores: descending score, ascending id on ties
            order = np.argsort(-scores[row], kind="stable")
            chosen = next((int(t) for t in order if int(t) not in known), None)
            if chosen is None:
                warnings.warn(
                    f"all candidates already known for pair ({int(e)}, {int(r)}); skipped",
                    stacklevel=2,
                )
                continue
            generated.append((int(e), int(r), chosen))
    return generated


def canonical_triple(triple: Triple, n_relations: int) -> Triple:
    """Forward-orientation form: inverse-relation triples are flipped back."""
    h, r, t = triple
    if r >= n_relations:
        return (t, r - n_relations, h)
    return (h, r, t)


def merge_generated(store: TripleStore, generated: list[Triple]) -> TripleStore:
    """Train split extended with the canonicalized generated triples, deduplicated."""
    existing = set(store.train)
    new_train = list(store.train)
    for triple in generated:
        canonical = canonical_triple(triple, store.n_relations)
        if canonical not in existing:
            existing.add(canonical)
            new_train.append(canonical)
    return store.replace_train(new_train)


def export_generated(store: TripleStore, generated: list[Triple],
                     path: str | Path) -> None:
    """Write generated triples as a TSV of surface strings, forward orientation."""
    ent = store.id_to_entity
    rel = store.id_to_relation
    with Path(path).open("w", encoding="utf-8") as handle:
        for triple in generated:
            h, r, t = canonical_triple(triple, store.n_relations)
            handle.write(f"{ent[h]}\t{rel[r]}\t{ent[t]}\n")


def self_train(model: LinkPredictor, store: TripleStore, *,
               source_splits: set[str] = frozenset({"valid", "test"}),
               rounds: int = 1, retrain_epochs: int = 300,
               warm_start: bool = True) -> tuple[LinkPredictor, list[Triple]]:
    """Run generation and retraining for the requested number of rounds.

    Returns the retrained model and everything generated across rounds.
    Retraining reuses the pretrained parameters unless ``warm_start`` is
    False, and applies the model's usual early-stopping rule with
    ``retrain_epochs`` as the epoch budget.
    """
    all_generated: list[Triple] = []
    current_store = store
    for _ in range(rounds):
        pair_set = build_condition_pairs(current_store, source_splits)
        generated = generate_new_triples(model._eval_score_fn(), current_store, pair_set)
        if not generated:
            warnings.warn("self-training generated no new triples; retraining on the "
                          "original train set", stacklevel=2)
        all_generated.extend(generated)
        current_store = merge_generated(current_store, generated)
        model.set_params(warm_start=warm_start, epochs=retrain_epochs)
        model.fit(current_store)
    return model, all_generated
