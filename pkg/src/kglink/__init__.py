"""Knowledge-graph link prediction with a directional graph self-attention
encoder, TransE/DistMult/ConvE decoders, filtered ranking evaluation, and
semi-supervised self-training."""

from .data import (
    AugmentedGraph,
    LoadReport,
    TripleStore,
    augment,
    export_dictionaries,
    known_tails,
    load_dataset,
    write_dataset,
)
from .encoder import EncoderConfig, GraphAttentionEncoder
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    KGLinkError,
    NotFittedError,
    NumericError,
)
from .evaluation import evaluate_ranking, rank_query
from .model import LinkPredictor
from .selftrain import build_condition_pairs, generate_new_triples, self_train

__version__ = "0.1.0"

__all__ = [
    "AugmentedGraph",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "EncoderConfig",
    "GraphAttentionEncoder",
    "KGLinkError",
    "LinkPredictor",
    "LoadReport",
    "NotFittedError",
    "NumericError",
    "TripleStore",
    "augment",
    "build_condition_pairs",
    "evaluate_ranking",
    "export_dictionaries",
    "generate_new_triples",
    "known_tails",
    "load_dataset",
    "rank_query",
    "self_train",
    "write_dataset",
]
