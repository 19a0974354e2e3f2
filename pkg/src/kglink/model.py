"""The LinkPredictor estimator: fit on a TripleStore, score condition pairs.

Follows scikit-learn conventions: constructor arguments are stored verbatim,
``get_params`` / ``set_params`` expose them for cloning and grid search, and
attributes learned by :meth:`fit` carry a trailing underscore.
"""
from __future__ import annotations

import hashlib
import inspect
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import TripleStore, augment, known_tails
from .decoders import DECODER_KINDS, make_decoder, probabilities
from .encoder import ACTIVATIONS, ATTENTION_MODES, EncoderConfig, GraphAttentionEncoder
from .errors import CheckpointError, ConfigError
from .evaluation import FILTER_POLICIES, evaluate_ranking
from .optim import Adam
from .training import EarlyStopper, condition_pairs, train_epoch
from .validation import (
    check_choice,
    check_interval,
    check_is_fitted,
    check_pairs_array,
    check_positive_int,
)

_DTYPES = {"float64": np.float64, "float32": np.float32}


class LinkPredictor:
    """Knowledge-graph link predictor with a graph self-attention encoder.

    Training scores every (entity, relation) condition pair of the augmented
    train graph against all entities, minimizes binary cross-entropy against
    the known tails, and early-stops on filtered validation MRR.
    """

    def __init__(self, *, dim: int = 200, layers: int = 2, decoder: str = "conve",
                 attention: str = "kbgsat", activation: str = "tanh",
                 learning_rate: float = 0.001, batch_size: int = 128,
                 dropout: float = 0.1, label_smoothing: float = 0.0,
                 epochs: int = 500, patience: int = 20,
                 conve_channels: int = 32, conve_kernel: tuple[int, int] = (3, 3),
                 conve_reshape: tuple[int, int] = (10, 20),
                 filter_policy: str = "standard", eval_batch_size: int = 512,
                 warm_start: bool = False, dtype: str = "float64",
                 seed: int = 0, workers: int = 1, verbose: int = 0):
        self.dim = dim
        self.layers = layers
        self.decoder = decoder
        self.attention = attention
        self.activation = activation
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dropout = dropout
        self.label_smoothing = label_smoothing
        self.epochs = epochs
        self.patience = patience
        self.conve_channels = conve_channels
        self.conve_kernel = conve_kernel
        self.conve_reshape = conve_reshape
        self.filter_policy = filter_policy
        self.eval_batch_size = eval_batch_size
        self.warm_start = warm_start
        self.dtype = dtype
        self.seed = seed
        self.workers = workers
        self.verbose = verbose

    # sklearn-style parameter plumbing ---------------------------------------
    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "LinkPredictor":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ConfigError(f"unknown parameter {key!r} for LinkPredictor")
            setattr(self, key, value)
        return self

    def _validate_params(self) -> None:
        check_positive_int("dim", self.dim)
        check_choice("layers", self.layers, (1, 2))
        check_choice("decoder", self.decoder, DECODER_KINDS)
        check_choice("attention", self.attention, ATTENTION_MODES)
        check_choice("activation", self.activation, ACTIVATIONS)
        check_choice("filter_policy", self.filter_policy, FILTER_POLICIES)
        check_choice("dtype", self.dtype, tuple(_DTYPES))
        check_interval("learning_rate", self.learning_rate, 0.0, 1.0)
        check_interval("dropout", self.dropout, 0.0, 1.0)
        check_interval("label_smoothing", self.label_smoothing, 0.0, 1.0)
        check_positive_int("batch_size", self.batch_size)
        check_positive_int("epochs", self.epochs)
        check_positive_int("patience", self.patience)
        check_positive_int("eval_batch_size", self.eval_batch_size)
        check_positive_int("workers", self.workers)
        if self.decoder == "conve":
            rows, cols = self.conve_reshape
            if rows * cols != self.dim:
                raise ConfigError(
                    f"conve_reshape {rows}x{cols} must cover dim {self.dim}"
                )

    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v!r}" for k, v in sorted(self.get_params().items()))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    # fitting ------------------------------------------------------------------
    def _build(self, store: TripleStore) -> None:
        self.encoder_ = GraphAttentionEncoder(EncoderConfig(
            dim=self.dim, layers=self.layers, attention=self.attention,
            activation=self.activation, dropout=self.dropout,
        ))
        self.decoder_ = make_decoder(self.decoder, channels=self.conve_channels,
                                     kernel=self.conve_kernel, reshape=self.conve_reshape)
        self.store_ = store
        self.graph_ = augment(store)
        self.n_entities_ = store.n_entities
        self.n_relations_ = store.n_relations

    def _init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        np_dtype = _DTYPES[self.dtype]
        params = self.encoder_.init_params(self.n_entities_, self.n_relations_, rng, np_dtype)
        params.update(self.decoder_.init_params(self.dim, rng, np_dtype))
        return params

    def fit(self, store: TripleStore) -> "LinkPredictor":
        """Train on the store's train split, early-stopping on valid MRR."""
        self._validate_params()
        if not store.valid:
            raise ConfigError("fit requires a non-empty valid split for early stopping")
        reuse = self.warm_start and hasattr(self, "params_")
        if reuse and self.params_["entity"].shape[0] != store.n_entities:
            raise ConfigError("warm start requires the same entity vocabulary")
        old_params = self.params_ if reuse else None
        self._build(store)
        seeds = np.random.SeedSequence(self.seed).spawn(3)
        init_rng, shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in seeds)
        self.params_ = old_params if reuse else self._init_params(init_rng)
        optimizer = Adam(self.params_, lr=self.learning_rate)

        tails_index = known_tails(store, {"train"})
        pairs, pair_tails = condition_pairs(self.graph_, tails_index)
        stopper = EarlyStopper(self.patience)
        history: list[tuple[int, float, float]] = []
        best_params: dict[str, np.ndarray] | None = None

        for epoch in range(1, self.epochs + 1):
            loss = train_epoch(self.encoder_, self.decoder_, self.params_, optimizer,
                               self.graph_, pairs, pair_tails, self.batch_size,
                               shuffle_rng, self.label_smoothing, dropout_rng)
            mrr = self._validation_mrr()
            history.append((epoch, loss, mrr))
            if self.verbose:
                print(f"epoch {epoch}\tloss {loss:.6f}\tvalid_mrr {mrr:.6f}")
            improved_to_best = stopper.best is None or mrr > stopper.best
            if improved_to_best:
                best_params = {k: t.data.copy() for k, t in self.params_.items()}
            if stopper.update(epoch, mrr):
                break

        if best_params is not None:
            for name, data in best_params.items():
                self.params_[name].data = data
        self.history_ = history
        self.best_valid_mrr_ = float(stopper.best if stopper.best is not None else 0.0)
        self.best_epoch_ = stopper.best_epoch
        return self

    def _validation_mrr(self) -> float:
        return self.evaluate("valid")["mrr"]

    # scoring -------------------------------------------------------------------
    def _eval_score_fn(self):
        """Closure scoring pairs with gradient recording off; thread-safe."""
        check_is_fitted(self, ("params_", "graph_"))
        frozen = {name: t.detach() for name, t in self.params_.items()}
        entity_out, relation_out = self.encoder_.encode(frozen, self.graph_)

        def score_fn(pairs: np.ndarray) -> np.ndarray:
            head = ad.gather_rows(entity_out, pairs[:, 0])
            rel = ad.gather_rows(relation_out, pairs[:, 1])
            return self.decoder_.score(head, rel, entity_out, frozen).data

        return score_fn

    def score_pairs(self, pairs) -> np.ndarray:
        """Score (entity, relation) pairs against every entity; (n, n_entities)."""
        check_is_fitted(self, ("params_", "graph_"))
        pairs = check_pairs_array(pairs, self.n_entities_, self.graph_.n_relation_rows)
        score_fn = self._eval_score_fn()
        chunks = [
            score_fn(pairs[start : start + self.eval_batch_size])
            for start in range(0, len(pairs), self.eval_batch_size)
        ]
        return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, self.n_entities_))

    def predict_proba(self, pairs) -> np.ndarray:
        """Sigmoid link probabilities for each pair against every entity."""
        scores = self.score_pairs(pairs)
        return probabilities(scores).data

    def topk(self, entity: int, relation: int, k: int = 10,
             filter_ids: set[int] | None = None) -> list[tuple[int, float]]:
        """Top-k (entity id, probability) for one pair, filtered, ties by id."""
        probs = self.predict_proba(np.asarray([[entity, relation]]))[0]
        candidates = np.arange(self.n_entities_)
        if filter_ids:
            keep = np.ones(self.n_entities_, dtype=bool)
            keep[np.fromiter(filter_ids, dtype=np.int64)] = False
            candidates = candidates[keep]
        order = candidates[np.argsort(-probs[candidates], kind="stable")]
        return [(int(idx), float(probs[idx])) for idx in order[:k]]

    def evaluate(self, split: str, filter_policy: str | None = None,
                 ks: tuple[int, ...] = (1, 3, 10)) -> dict:
        """Filtered MR / MRR / Hits@k over a split, both query directions."""
        check_is_fitted(self, ("params_", "store_"))
        policy = self.filter_policy if filter_policy is None else filter_policy
        return evaluate_ranking(self._eval_score_fn(), self.store_, split,
                                filter_policy=policy, ks=ks,
                                batch_size=self.eval_batch_size, workers=self.workers)

    # persistence ----------------------------------------------------------------
    _META_CONVERTERS = {
        "dim": int, "layers": int, "decoder": str, "attention": str,
        "activation": str, "learning_rate": float, "batch_size": int,
        "dropout": float, "label_smoothing": float, "epochs": int, "patience": int,
        "conve_channels": int, "filter_policy": str, "eval_batch_size": int,
        "dtype": str, "seed": int, "workers": int, "verbose": int,
    }

    def save(self, path: str | Path) -> None:
        """Write parameters and configuration to a checkpoint file."""
        check_is_fitted(self)
        meta: dict[str, str] = {}
        for name, value in self.get_params().items():
            if name in ("conve_kernel", "conve_reshape"):
                meta[name] = ",".join(str(v) for v in value)
            elif name == "warm_start":
                meta[name] = "1" if value else "0"
            else:
                meta[name] = str(value)
        meta["n_entities"] = str(self.n_entities_)
        meta["n_relations"] = str(self.n_relations_)
        meta["best_epoch"] = str(getattr(self, "best_epoch_", 0))
        meta["best_valid_mrr"] = repr(getattr(self, "best_valid_mrr_", 0.0))
        meta["config_hash"] = self.config_hash()
        arrays = {name: tensor.data for name, tensor in self.params_.items()}
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path, store: TripleStore | None = None) -> "LinkPredictor":
        """Rebuild an estimator from a checkpoint, optionally bound to a store."""
        meta, arrays = load_checkpoint(path)
        kwargs: dict = {}
        for name, converter in cls._META_CONVERTERS.items():
            if name in meta:
                kwargs[name] = converter(meta[name])
        for name in ("conve_kernel", "conve_reshape"):
            if name in meta:
                kwargs[name] = tuple(int(v) for v in meta[name].split(","))
        if "warm_start" in meta:
            kwargs["warm_start"] = meta["warm_start"] == "1"
        model = cls(**kwargs)
        model._validate_params()

        n_entities = int(meta["n_entities"])
        n_relations = int(meta["n_relations"])
        np_dtype = _DTYPES[model.dtype]
        model.params_ = {
            name: Tensor(arr.astype(np_dtype), requires_grad=True)
            for name, arr in arrays.items()
        }
        model.n_entities_ = n_entities
        model.n_relations_ = n_relations
        model.best_epoch_ = int(meta.get("best_epoch", "0"))
        model.best_valid_mrr_ = float(meta.get("best_valid_mrr", "0.0"))
        model.history_ = []
        model.encoder_ = GraphAttentionEncoder(EncoderConfig(
            dim=model.dim, layers=model.layers, attention=model.attention,
            activation=model.activation, dropout=model.dropout,
        ))
        model.decoder_ = make_decoder(model.decoder, channels=model.conve_channels,
                                      kernel=model.conve_kernel, reshape=model.conve_reshape)
        if store is not None:
            model.bind(store)
        return model

    def bind(self, store: TripleStore) -> "LinkPredictor":
        """Attach a store (graph and dictionaries) to a loaded model."""
        if store.n_entities != self.n_entities_ or store.n_relations != self.n_relations_:
            raise CheckpointError(
                f"checkpoint was trained on {self.n_entities_} entities / "
                f"{self.n_relations_} relations; store has {store.n_entities} / "
                f"{store.n_relations}"
            )
        self.store_ = store
        self.graph_ = augment(store)
        return self
