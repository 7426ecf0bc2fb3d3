"""Attention cue extractor: token importance scores, pooled embedding, and
the per-sample contextual weight consumed by the context-aware loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

import cuenet.tensor as T
from cuenet.tensor import Parameter, Tensor
from cuenet.errors import ConfigError

CONTEXT_MODES = ("paper_literal", "sigmoid_mean")


@dataclass
class CueExtractorState:
    w_att: Parameter  # shape (d_model,)

    def parameters(self):
        return [self.w_att]


def init_cue(d_model: int, rng: np.random.Generator) -> CueExtractorState:
    return CueExtractorState(w_att=Parameter(rng.normal(0.0, 0.02, d_model), "cue.w_att"))


def score(h: Tensor, state: CueExtractorState) -> Tensor:
    """Per-position scalar importance: dot(w_att, h_i). Shape (b, l)."""
    b, l, d = h.shape
    if d != state.w_att.shape[0]:
        raise ValueError(f"score: d_model mismatch {d} vs {state.w_att.shape[0]}")
    return T.reshape(T.matmul(h, T.reshape(state.w_att, (d, 1))), (b, l))


def attend(s: Tensor, mask: np.ndarray) -> Tensor:
    """Attention weights over valid positions; masked positions exactly 0."""
    return T.masked_softmax(s, np.asarray(mask, dtype=np.float64))


def weighted_embedding(a: Tensor, h: Tensor) -> Tensor:
    """Attention-weighted sum of token embeddings. Shape (b, d)."""
    b, l, d = h.shape
    if a.shape != (b, l):
        raise ValueError(f"weighted_embedding: shape mismatch {a.shape} vs {(b, l)}")
    return T.reshape(T.matmul(T.reshape(a, (b, 1, l)), h), (b, d))


def contextual_weight(s: Tensor, a: Tensor, mask: np.ndarray, mode: str) -> Tensor:
    """Per-sample loss scale, detached from the graph by construction.

    paper_literal sums the attention weights over valid tokens, which a
    normalized softmax forces to 1 for every sample; it is kept as the
    documented degenerate mode. sigmoid_mean averages the sigmoid of the raw
    scores over valid tokens, giving a value in (0, 1) that actually varies
    per sample. Neither mode lets gradient flow back into the scores.
    """
    if mode not in CONTEXT_MODES:
        raise ConfigError(f"unknown context mode {mode!r}; expected one of {CONTEXT_MODES}")
    mask = np.asarray(mask, dtype=np.float64)
    if mode == "paper_literal":
        w = (a.data * mask).sum(axis=-1)
    else:
        w = (expit(s.data) * mask).sum(axis=-1) / mask.sum(axis=-1)
    return Tensor(w)  # plain values: constant under differentiation
