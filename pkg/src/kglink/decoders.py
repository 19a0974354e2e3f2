"""Scoring of (entity, relation) condition pairs against all candidate tails.

All decoders map a batch of head vectors and relation vectors plus a
candidate table to a (batch, n_candidates) score matrix; higher scores mean
more plausible links.  Scores become probabilities through the sigmoid, and
training minimizes the mean binary cross-entropy against per-candidate
0/1 labels.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import he_normal
from .errors import ConfigError, DimensionError

DECODER_KINDS = ("transe", "distmult", "conve")

PROB_EPS = 1e-7


class TransEDecoder:
    """Negated L1 distance between head + relation and each candidate.

    The score is 0 exactly when the candidate equals the translated head,
    and negative everywhere else, so descending score order ranks exact
    translations first.
    """

    kind = "transe"

    def init_params(self, dim: int, rng: np.random.Generator, dtype=np.float64) -> dict[str, Tensor]:
        return {}

    def score(self, head: Tensor, rel: Tensor, candidates: Tensor,
              params: dict[str, Tensor]) -> Tensor:
        batch, dim = head.shape
        n = candidates.shape[0]
        translated = ad.reshape(ad.add(head, rel), (batch, 1, dim))
        diff = ad.sub(translated, ad.reshape(candidates, (1, n, dim)))
        return ad.neg(ad.l1_norm(diff))


class DistMultDecoder:
    """Sum of the elementwise head*relation*candidate triple product."""

    kind = "distmult"

    def init_params(self, dim: int, rng: np.random.Generator, dtype=np.float64) -> dict[str, Tensor]:
        return {}

    def score(self, head: Tensor, rel: Tensor, candidates: Tensor,
              params: dict[str, Tensor]) -> Tensor:
        return ad.matmul(ad.mul(head, rel), ad.transpose(candidates))


class ConvEDecoder:
    """Convolution over the stacked 2-D reshapes of head and relation.

    The head and relation vectors are reshaped to (rows, cols), stacked
    vertically into a single-channel image, convolved, rectified, projected
    back to the embedding dimension, rectified again, and dotted with every
    candidate.
    """

    kind = "conve"

    def __init__(self, channels: int = 32, kernel: tuple[int, int] = (3, 3),
                 reshape: tuple[int, int] = (10, 20)):
        self.channels = channels
        self.kernel = tuple(kernel)
        self.reshape = tuple(reshape)

    def _check_dims(self, dim: int) -> None:
        rows, cols = self.reshape
        if rows * cols != dim:
            raise DimensionError(
                f"conve reshape {rows}x{cols} does not cover embedding dim {dim}"
            )
        kh, kw = self.kernel
        if kh > 2 * rows or kw > cols:
            raise DimensionError(
                f"conve kernel {kh}x{kw} larger than stacked input {2 * rows}x{cols}"
            )

    def feature_size(self, dim: int) -> int:
        rows, cols = self.reshape
        kh, kw = self.kernel
        return self.channels * (2 * rows - kh + 1) * (cols - kw + 1)

    def init_params(self, dim: int, rng: np.random.Generator, dtype=np.float64) -> dict[str, Tensor]:
        self._check_dims(dim)
        kh, kw = self.kernel
        flat = self.feature_size(dim)
        return {
            "conv_kernels": Tensor(
                he_normal(rng, (self.channels, 1, kh, kw), fan_in=kh * kw, dtype=dtype),
                requires_grad=True,
            ),
            "conv_bias": Tensor(np.zeros(self.channels, dtype=dtype), requires_grad=True),
            "proj": Tensor(he_normal(rng, (dim, flat), fan_in=flat, dtype=dtype), requires_grad=True),
            "proj_bias": Tensor(np.zeros(dim, dtype=dtype), requires_grad=True),
        }

    def score(self, head: Tensor, rel: Tensor, candidates: Tensor,
              params: dict[str, Tensor]) -> Tensor:
        batch, dim = head.shape
        self._check_dims(dim)
        rows, cols = self.reshape
        # concatenating along the feature axis then reshaping stacks the two
        # row-major (rows, cols) images vertically
        stacked = ad.reshape(ad.concat([head, rel], axis=-1), (batch, 1, 2 * rows, cols))
        fmap = ad.relu(ad.conv2d_valid(stacked, params["conv_kernels"], params["conv_bias"]))
        flat = ad.reshape(fmap, (batch, self.feature_size(dim)))
        hidden = ad.relu(ad.add(ad.matmul(flat, ad.transpose(params["proj"])), params["proj_bias"]))
        return ad.matmul(hidden, ad.transpose(candidates))


def make_decoder(kind: str, *, channels: int = 32, kernel: tuple[int, int] = (3, 3),
                 reshape: tuple[int, int] = (10, 20)):
    if kind == "transe":
        return TransEDecoder()
    if kind == "distmult":
        return DistMultDecoder()
    if kind == "conve":
        return ConvEDecoder(channels=channels, kernel=kernel, reshape=reshape)
    raise ConfigError(f"decoder must be one of {DECODER_KINDS}, got {kind!r}")


# single-query conveniences -------------------------------------------------

def _score_single(decoder, v_h, v_r, candidates, params=None) -> np.ndarray:
    head = ad.as_tensor(np.asarray(v_h)[None, :])
    rel = ad.as_tensor(np.asarray(v_r)[None, :])
    cands = ad.as_tensor(candidates)
    with ad.no_grad():
        return decoder.score(head, rel, cands, params or {}).data[0]


def score_transe(v_h, v_r, candidates) -> np.ndarray:
    """Scores of one (head, relation) query against a candidate table."""
    return _score_single(TransEDecoder(), v_h, v_r, candidates)


def score_distmult(v_h, v_r, candidates) -> np.ndarray:
    return _score_single(DistMultDecoder(), v_h, v_r, candidates)


def score_conve(v_h, v_r, candidates, params, *, channels: int, kernel: tuple[int, int],
                reshape: tuple[int, int]) -> np.ndarray:
    decoder = ConvEDecoder(channels=channels, kernel=kernel, reshape=reshape)
    return _score_single(decoder, v_h, v_r, candidates, params)


# probabilities and loss ------------------------------------------------------

def probabilities(scores) -> Tensor:
    """Sigmoid link probabilities; strictly increasing in the score."""
    return ad.sigmoid(ad.as_tensor(scores))


def bce_loss(probs, labels, label_smoothing: float = 0.0) -> Tensor:
    """Mean binary cross-entropy over every (query, candidate) cell.

    Probabilities are clamped away from 0 and 1 so the logs stay finite.
    """
    probs = ad.as_tensor(probs)
    labels_arr = np.asarray(labels, dtype=probs.data.dtype)
    if labels_arr.shape != probs.data.shape:
        raise DimensionError(
            f"labels shape {labels_arr.shape} does not match probabilities shape {probs.data.shape}"
        )
    if label_smoothing:
        n_candidates = labels_arr.shape[-1]
        labels_arr = labels_arr * (1.0 - label_smoothing) + label_smoothing / n_candidates
    q = Tensor(labels_arr)
    p = ad.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    point = ad.add(ad.mul(q, ad.log(p)), ad.mul(ad.sub(1.0, q), ad.log(ad.sub(1.0, p))))
    return ad.neg(ad.reduce_mean(point))
