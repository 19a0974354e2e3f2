"""Batch construction and the per-epoch training step.

Training items are the distinct (entity, relation) condition pairs of the
augmented train graph.  Each pair is scored against every entity at once,
with a 0/1 label per candidate: 1 for every tail known from train, 0 for
everything else (uncollected facts count as negatives).
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import AugmentedGraph
from .errors import NumericError
from .optim import Adam


def condition_pairs(graph: AugmentedGraph,
                    tails_index: dict[tuple[int, int], set[int]]
                    ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Distinct training pairs (sorted) with their known-tail id arrays."""
    seen: set[tuple[int, int]] = set()
    for h, r, _ in graph.triples_aug:
        seen.add((h, r))
    pairs = np.asarray(sorted(seen), dtype=np.int64)
    tails = [np.asarray(sorted(tails_index[(e, r)]), dtype=np.int64) for e, r in pairs]
    return pairs, tails


def label_matrix(pair_tails: list[np.ndarray], n_entities: int, dtype=np.float64) -> np.ndarray:
    labels = np.zeros((len(pair_tails), n_entities), dtype=dtype)
    for row, tails in enumerate(pair_tails):
        labels[row, tails] = 1.0
    return labels


def iterate_batches(pairs: np.ndarray, tails: list[np.ndarray], batch_size: int,
                    rng: np.random.Generator) -> Iterator[tuple[np.ndarray, list[np.ndarray]]]:
    """Shuffled batches of (pair array, per-pair tails); last batch may be short."""
    order = rng.permutation(len(pairs))
    for start in range(0, len(order), batch_size):
        chosen = order[start : start + batch_size]
        yield pairs[chosen], [tails[i] for i in chosen]


def batch_loss(encoder, decoder, params: dict[str, Tensor], graph: AugmentedGraph,
               batch_pairs: np.ndarray, batch_tails: list[np.ndarray],
               label_smoothing: float = 0.0, rng: np.random.Generator | None = None,
               training: bool = False) -> Tensor:
    """Full-graph encode, 1-N scoring of the batch pairs, and BCE loss."""
    from .decoders import bce_loss, probabilities

    entity_out, relation_out = encoder.encode(params, graph, rng=rng, training=training)
    head = ad.gather_rows(entity_out, batch_pairs[:, 0])
    rel = ad.gather_rows(relation_out, batch_pairs[:, 1])
    scores = decoder.score(head, rel, entity_out, params)
    probs = probabilities(scores)
    labels = label_matrix(batch_tails, graph.n_entities, dtype=entity_out.data.dtype)
    return bce_loss(probs, labels, label_smoothing)


def train_epoch(encoder, decoder, params: dict[str, Tensor], optimizer: Adam,
                graph: AugmentedGraph, pairs: np.ndarray, tails: list[np.ndarray],
                batch_size: int, rng: np.random.Generator,
                label_smoothing: float = 0.0, dropout_rng: np.random.Generator | None = None) -> float:
    """One pass over all condition pairs; returns the pair-weighted mean loss."""
    total_loss = 0.0
    total_pairs = 0
    for batch_pairs, batch_tails in iterate_batches(pairs, tails, batch_size, rng):
        loss = batch_loss(encoder, decoder, params, graph, batch_pairs, batch_tails,
                          label_smoothing, rng=dropout_rng, training=True)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite training loss {value!r} on a batch of {len(batch_pairs)} pairs"
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        total_loss += value * len(batch_pairs)
        total_pairs += len(batch_pairs)
    return total_loss / max(total_pairs, 1)


class EarlyStopper:
    """Track the best validation value and signal after `patience` stale epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's value; returns True when training should stop."""
        if self.best is None or value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience
