"""Directional graph self-attention encoder over an augmented triple graph.

Each layer aggregates three signals per entity and combines them:

* outgoing edges: attention-weighted sum of transformed (tail, relation) pairs,
* incoming edges: the mirror image over (head, relation) pairs,
* a self-loop transform of the entity with a dedicated loop relation.

Attention logits are, per edge, the dot product between the transformed
center entity and the transformed (neighbor, relation) message, where the
message transform is shared with the aggregation ("kbgsat" mode).  The
"kbgat" ablation instead scores each edge with a single global attention
vector against the concatenated head/relation/tail embeddings.  Coefficients
are softmax-normalized per center entity and direction.

Relations are updated by a per-layer linear map.  The final entity embedding
is the sum of all layer outputs (skip connection); the final relation
embedding comes from the last layer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import AugmentedGraph
from .errors import ConfigError, DimensionError

ATTENTION_MODES = ("kbgsat", "kbgat")
ACTIVATIONS = ("tanh", "relu")
DIRECTIONS = ("out", "in")


@dataclass(frozen=True)
class EncoderConfig:
    dim: int
    layers: int = 2
    attention: str = "kbgsat"
    activation: str = "tanh"
    dropout: float = 0.0

    def validate(self) -> "EncoderConfig":
        if self.dim <= 0:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        if self.layers not in (1, 2):
            raise ConfigError(f"layers must be 1 or 2, got {self.layers}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
              dtype=np.float64) -> np.ndarray:
    """Zero-mean normal draw with variance 2 / fan_in."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def _edge_views(graph: AugmentedGraph, direction: str):
    """(center, neighbor, relation) edge index arrays for one direction."""
    if direction == "out":
        return graph.heads, graph.tails, graph.rels
    if direction == "in":
        return graph.tails, graph.heads, graph.rels
    raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


class GraphAttentionEncoder:
    """Stateless encoder logic; all learnable arrays live in a params dict."""

    def __init__(self, config: EncoderConfig):
        self.config = config.validate()

    # parameters -------------------------------------------------------------
    def init_params(self, n_entities: int, n_relations: int,
                    rng: np.random.Generator, dtype=np.float64) -> dict[str, Tensor]:
        """He-normal initialized embeddings and per-layer weights.

        The draw order is fixed, so a fixed seed reproduces parameters
        bit-for-bit.  The relation table has rows for forward, inverse, and
        the self-loop relation.
        """
        d = self.config.dim
        params: dict[str, Tensor] = {}

        def param(name: str, shape: tuple[int, ...], fan_in: int) -> None:
            params[name] = Tensor(he_normal(rng, shape, fan_in, dtype), requires_grad=True)

        param("entity", (n_entities, d), d)
        param("relation", (2 * n_relations + 1, d), d)
        for layer in range(self.config.layers):
            prefix = f"layer{layer}"
            param(f"{prefix}.out_msg", (d, 2 * d), 2 * d)
            param(f"{prefix}.in_msg", (d, 2 * d), 2 * d)
            param(f"{prefix}.loop", (d, 2 * d), 2 * d)
            param(f"{prefix}.combine", (d, 3 * d), 3 * d)
            if self.config.attention == "kbgsat":
                param(f"{prefix}.out_query", (d, d), d)
                param(f"{prefix}.in_query", (d, d), d)
            else:
                param(f"{prefix}.att_vec", (3 * d,), 3 * d)
            param(f"{prefix}.rel", (d, d), d)
        return params

    # per-operation pieces -----------------------------------------------------
    def _messages(self, direction: str, layer: int, entity_emb: Tensor,
                  relation_emb: Tensor, params: dict[str, Tensor],
                  graph: AugmentedGraph) -> Tensor:
        _, neighbor, rels = _edge_views(graph, direction)
        w_msg = params[f"layer{layer}.{direction}_msg"]
        pairs = ad.concat(
            [ad.gather_rows(entity_emb, neighbor), ad.gather_rows(relation_emb, rels)],
            axis=-1,
        )
        return ad.matmul(pairs, ad.transpose(w_msg))

    def _logits(self, direction: str, layer: int, entity_emb: Tensor,
                relation_emb: Tensor, params: dict[str, Tensor],
                graph: AugmentedGraph, messages: Tensor) -> Tensor:
        center, _, _ = _edge_views(graph, direction)
        if self.config.attention == "kbgsat":
            w_query = params[f"layer{layer}.{direction}_query"]
            queries = ad.gather_rows(ad.matmul(entity_emb, ad.transpose(w_query)), center)
            return ad.reduce_sum(ad.mul(queries, messages), axis=-1)
        att_vec = params[f"layer{layer}.att_vec"]
        triple_feats = ad.concat(
            [
                ad.gather_rows(entity_emb, graph.heads),
                ad.gather_rows(relation_emb, graph.rels),
                ad.gather_rows(entity_emb, graph.tails),
            ],
            axis=-1,
        )
        n_edges = graph.heads.shape[0]
        logits = ad.matmul(triple_feats, ad.reshape(att_vec, (att_vec.size, 1)))
        return ad.reshape(logits, (n_edges,))

    def attention_coefficients(self, direction: str, layer: int, entity_emb: Tensor,
                               relation_emb: Tensor, params: dict[str, Tensor],
                               graph: AugmentedGraph) -> Tensor:
        """Per-edge coefficients, softmax-normalized over each center entity."""
        center, _, _ = _edge_views(graph, direction)
        messages = self._messages(direction, layer, entity_emb, relation_emb, params, graph)
        logits = self._logits(direction, layer, entity_emb, relation_emb, params, graph, messages)
        return ad.segment_softmax(logits, center, graph.n_entities)

    def aggregate_direction(self, direction: str, layer: int, entity_emb: Tensor,
                            relation_emb: Tensor, params: dict[str, Tensor],
                            graph: AugmentedGraph, coefficients: Tensor) -> Tensor:
        """Coefficient-weighted sum of transformed messages per center entity.

        Entities without edges in this direction get the zero vector.
        """
        center, _, _ = _edge_views(graph, direction)
        messages = self._messages(direction, layer, entity_emb, relation_emb, params, graph)
        n_edges = center.shape[0]
        weighted = ad.mul(messages, ad.reshape(coefficients, (n_edges, 1)))
        return ad.scatter_add_rows(weighted, center, graph.n_entities)

    def self_loop(self, layer: int, entity_emb: Tensor, relation_emb: Tensor,
                  params: dict[str, Tensor], loop_relation_id: int) -> Tensor:
        """Transform of each entity paired with the loop relation; no attention."""
        n = entity_emb.shape[0]
        loop_rows = ad.gather_rows(relation_emb, np.full(n, loop_relation_id, dtype=np.int64))
        pairs = ad.concat([entity_emb, loop_rows], axis=-1)
        return ad.matmul(pairs, ad.transpose(params[f"layer{layer}.loop"]))

    def _direction_output(self, direction: str, layer: int, entity_emb: Tensor,
                          relation_emb: Tensor, params: dict[str, Tensor],
                          graph: AugmentedGraph, rng, training: bool) -> Tensor:
        # shares the message transform between attention and aggregation
        center, _, _ = _edge_views(graph, direction)
        messages = self._messages(direction, layer, entity_emb, relation_emb, params, graph)
        logits = self._logits(direction, layer, entity_emb, relation_emb, params, graph, messages)
        coeffs = ad.segment_softmax(logits, center, graph.n_entities)
        if training and rng is not None:
            coeffs = ad.dropout(coeffs, self.config.dropout, rng, training)
        weighted = ad.mul(messages, ad.reshape(coeffs, (center.shape[0], 1)))
        return ad.scatter_add_rows(weighted, center, graph.n_entities)

    def layer_forward(self, layer: int, entity_emb: Tensor, relation_emb: Tensor,
                      params: dict[str, Tensor], graph: AugmentedGraph,
                      rng: np.random.Generator | None = None,
                      training: bool = False) -> tuple[Tensor, Tensor]:
        """One layer: combine out/in/loop signals, update relations."""
        if entity_emb.shape[0] != graph.n_entities:
            raise DimensionError(
                f"entity table has {entity_emb.shape[0]} rows, graph expects {graph.n_entities}"
            )
        v_out = self._direction_output("out", layer, entity_emb, relation_emb, params, graph, rng, training)
        v_in = self._direction_output("in", layer, entity_emb, relation_emb, params, graph, rng, training)
        v_loop = self.self_loop(layer, entity_emb, relation_emb, params, graph.loop_relation_id)
        combined = ad.matmul(ad.concat([v_out, v_in, v_loop], axis=-1),
                             ad.transpose(params[f"layer{layer}.combine"]))
        activation = ad.tanh if self.config.activation == "tanh" else ad.relu
        entity_new = activation(combined)
        if training and rng is not None:
            entity_new = ad.dropout(entity_new, self.config.dropout, rng, training)
        relation_new = ad.matmul(relation_emb, ad.transpose(params[f"layer{layer}.rel"]))
        return entity_new, relation_new

    def encode(self, params: dict[str, Tensor], graph: AugmentedGraph,
               rng: np.random.Generator | None = None,
               training: bool = False) -> tuple[Tensor, Tensor]:
        """Full forward pass: entity output is the sum over layer outputs."""
        entity_emb = params["entity"]
        relation_emb = params["relation"]
        layer_outputs: list[Tensor] = []
        for layer in range(self.config.layers):
            entity_emb, relation_emb = self.layer_forward(
                layer, entity_emb, relation_emb, params, graph, rng, training
            )
            layer_outputs.append(entity_emb)
        entity_final = layer_outputs[0]
        for extra in layer_outputs[1:]:
            entity_final = ad.add(entity_final, extra)
        return entity_final, relation_emb
