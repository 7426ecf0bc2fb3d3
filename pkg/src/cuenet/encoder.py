"""Small transformer encoder producing per-token contextual embeddings.

Post-layer-norm residual blocks, GELU feed-forward, learned absolute
position embeddings. Self-attention keys/values are restricted to valid
positions via the padding mask, so outputs at valid positions never depend
on what the padded slots contain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import cuenet.tensor as T
from cuenet.tensor import Parameter, Tensor
from cuenet.errors import ConfigError

INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    max_len: int = 128
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn_dim: int | None = None  # None means 4 * d_model
    dropout: float = 0.3

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)


def normal_param(rng: np.random.Generator, shape, name: str, std: float = INIT_STD) -> Parameter:
    return Parameter(rng.normal(0.0, std, shape), name)


def zeros_param(shape, name: str) -> Parameter:
    return Parameter(np.zeros(shape), name)


def ones_param(shape, name: str) -> Parameter:
    return Parameter(np.ones(shape), name)


@dataclass
class LayerState:
    wq: Parameter
    bq: Parameter
    wk: Parameter
    bk: Parameter
    wv: Parameter
    bv: Parameter
    wo: Parameter
    bo: Parameter
    ln1_g: Parameter
    ln1_b: Parameter
    w_ff1: Parameter
    b_ff1: Parameter
    w_ff2: Parameter
    b_ff2: Parameter
    ln2_g: Parameter
    ln2_b: Parameter


@dataclass
class EncoderState:
    config: EncoderConfig
    tok_emb: Parameter
    pos_emb: Parameter
    layers: list = field(default_factory=list)

    def parameters(self):
        out = [self.tok_emb, self.pos_emb]
        for layer in self.layers:
            out.extend(getattr(layer, f.name) for f in layer.__dataclass_fields__.values())
        return out


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderState:
    d, f = cfg.d_model, cfg.ffn_dim
    tok = rng.normal(0.0, INIT_STD, (cfg.vocab_size, d))
    tok[0] = 0.0  # pad row stays zero at init
    layers = []
    for i in range(cfg.n_layers):
        p = f"encoder.layers.{i}"
        layers.append(LayerState(
            wq=normal_param(rng, (d, d), f"{p}.wq"), bq=zeros_param(d, f"{p}.bq"),
            wk=normal_param(rng, (d, d), f"{p}.wk"), bk=zeros_param(d, f"{p}.bk"),
            wv=normal_param(rng, (d, d), f"{p}.wv"), bv=zeros_param(d, f"{p}.bv"),
            wo=normal_param(rng, (d, d), f"{p}.wo"), bo=zeros_param(d, f"{p}.bo"),
            ln1_g=ones_param(d, f"{p}.ln1_g"), ln1_b=zeros_param(d, f"{p}.ln1_b"),
            w_ff1=normal_param(rng, (d, f), f"{p}.w_ff1"), b_ff1=zeros_param(f, f"{p}.b_ff1"),
            w_ff2=normal_param(rng, (f, d), f"{p}.w_ff2"), b_ff2=zeros_param(d, f"{p}.b_ff2"),
            ln2_g=ones_param(d, f"{p}.ln2_g"), ln2_b=zeros_param(d, f"{p}.ln2_b"),
        ))
    return EncoderState(
        config=cfg,
        tok_emb=Parameter(tok, "encoder.tok_emb"),
        pos_emb=normal_param(rng, (cfg.max_len, d), "encoder.pos_emb"),
        layers=layers,
    )


def _heads(x: Tensor, b: int, l: int, n_heads: int, d_head: int) -> Tensor:
    return T.transpose(T.reshape(x, (b, l, n_heads, d_head)), (0, 2, 1, 3))


def _attention(x: Tensor, key_mask: np.ndarray, layer: LayerState, cfg: EncoderConfig,
               keep: float, rng) -> Tensor:
    b, l, d = x.shape
    dh = d // cfg.n_heads
    q = _heads(T.matmul(x, layer.wq) + layer.bq, b, l, cfg.n_heads, dh)
    k = _heads(T.matmul(x, layer.wk) + layer.bk, b, l, cfg.n_heads, dh)
    v = _heads(T.matmul(x, layer.wv) + layer.bv, b, l, cfg.n_heads, dh)
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    att = T.masked_softmax(scores, key_mask)  # (b, heads, l, l)
    ctx = T.matmul(att, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, l, d))
    out = T.matmul(ctx, layer.wo) + layer.bo
    if keep < 1.0:
        out = T.dropout(out, keep, rng)
    return out


def encode(ids: np.ndarray, mask: np.ndarray, state: EncoderState,
           train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Contextual embeddings, shape (batch, length, d_model)."""
    cfg = state.config
    ids = np.asarray(ids, dtype=np.int64)
    b, l = ids.shape
    if l > cfg.max_len:
        raise ValueError(f"sequence length {l} exceeds max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError(f"token id out of range for vocab_size {cfg.vocab_size}")
    keep = 1.0 - cfg.dropout if train_mode else 1.0
    if keep < 1.0 and rng is None:
        raise ValueError("train-mode encode needs an rng for dropout")

    x = T.embedding(state.tok_emb, ids) + T.embedding(state.pos_emb, np.arange(l))
    if keep < 1.0:
        x = T.dropout(x, keep, rng)
    key_mask = np.asarray(mask, dtype=np.float64).reshape(b, 1, 1, l)
    for layer in state.layers:
        att = _attention(x, key_mask, layer, cfg, keep, rng)
        x = T.layer_norm(x + att) * layer.ln1_g + layer.ln1_b
        ff = T.matmul(T.gelu(T.matmul(x, layer.w_ff1) + layer.b_ff1), layer.w_ff2) + layer.b_ff2
        if keep < 1.0:
            ff = T.dropout(ff, keep, rng)
        x = T.layer_norm(x + ff) * layer.ln2_g + layer.ln2_b
    return x
