"""Bidirectional GRU over encoder outputs.

The forward pass walks valid positions left to right, the backward pass
right to left; padded steps carry the hidden state through unchanged and
emit zeros, so the final representation [forward h at the last valid
position, backward h at the first valid position] is independent of how
much padding follows the content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import cuenet.tensor as T
from cuenet.tensor import Parameter, Tensor
from cuenet.encoder import normal_param, zeros_param


@dataclass
class GruDirection:
    w_z: Parameter
    w_r: Parameter
    w_h: Parameter
    u_z: Parameter
    u_r: Parameter
    u_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter


@dataclass
class GruState:
    hidden: int
    fwd: GruDirection
    bwd: GruDirection

    def parameters(self):
        out = []
        for direction in (self.fwd, self.bwd):
            out.extend(getattr(direction, f) for f in
                       ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"))
        return out


def _init_direction(d_model: int, hidden: int, rng, prefix: str) -> GruDirection:
    return GruDirection(
        w_z=normal_param(rng, (d_model, hidden), f"{prefix}.w_z"),
        w_r=normal_param(rng, (d_model, hidden), f"{prefix}.w_r"),
        w_h=normal_param(rng, (d_model, hidden), f"{prefix}.w_h"),
        u_z=normal_param(rng, (hidden, hidden), f"{prefix}.u_z"),
        u_r=normal_param(rng, (hidden, hidden), f"{prefix}.u_r"),
        u_h=normal_param(rng, (hidden, hidden), f"{prefix}.u_h"),
        b_z=zeros_param(hidden, f"{prefix}.b_z"),
        b_r=zeros_param(hidden, f"{prefix}.b_r"),
        b_h=zeros_param(hidden, f"{prefix}.b_h"),
    )


def init_gru(d_model: int, hidden: int, rng: np.random.Generator) -> GruState:
    return GruState(
        hidden=hidden,
        fwd=_init_direction(d_model, hidden, rng, "gru.fwd"),
        bwd=_init_direction(d_model, hidden, rng, "gru.bwd"),
    )


def gru_cell(x_t: Tensor, h_prev: Tensor, p: GruDirection) -> Tensor:
    """Standard GRU gate equations for one step, batched."""
    z = T.sigmoid(T.matmul(x_t, p.w_z) + T.matmul(h_prev, p.u_z) + p.b_z)
    r = T.sigmoid(T.matmul(x_t, p.w_r) + T.matmul(h_prev, p.u_r) + p.b_r)
    h_tilde = T.tanh(T.matmul(x_t, p.w_h) + T.matmul(T.mul(r, h_prev), p.u_h) + p.b_h)
    return T.mul(1.0 - z, h_prev) + T.mul(z, h_tilde)


def _run_direction(h_seq: Tensor, mask: np.ndarray, p: GruDirection,
                   order) -> list:
    b, l, _ = h_seq.shape
    hidden = p.u_z.shape[0]
    h = Tensor(np.zeros((b, hidden)))
    outs = [None] * l
    for t in order:
        x_t = h_seq[:, t]
        m_t = mask[:, t].reshape(b, 1)
        h_new = gru_cell(x_t, h, p)
        # padded steps keep the previous hidden state and emit zeros
        h = T.mul(h_new, m_t) + T.mul(h, 1.0 - m_t)
        outs[t] = T.reshape(T.mul(h, m_t), (b, 1, hidden))
    return outs


def bigru(h_seq: Tensor, mask: np.ndarray, state: GruState) -> Tensor:
    """Per-position [forward h, backward h], shape (b, l, 2*hidden)."""
    mask = np.asarray(mask, dtype=np.float64)
    b, l, _ = h_seq.shape
    if mask.shape != (b, l):
        raise ValueError(f"bigru: mask shape {mask.shape} does not match {(b, l)}")
    if not (mask.sum(axis=1) >= 1).all():
        raise ValueError("bigru: row with no valid tokens")
    fwd = _run_direction(h_seq, mask, state.fwd, range(l))
    bwd = _run_direction(h_seq, mask, state.bwd, range(l - 1, -1, -1))
    return T.concat([T.concat(fwd, axis=1), T.concat(bwd, axis=1)], axis=2)


def final_repr(g: Tensor, mask: np.ndarray) -> Tensor:
    """[forward h at the last valid position, backward h at the first valid].

    Reads positions from the mask, so padding length cannot leak into the
    representation.
    """
    mask = np.asarray(mask, dtype=np.float64)
    b, l, two_h = g.shape
    if mask.shape != (b, l):
        raise ValueError(f"final_repr: mask shape {mask.shape} does not match {(b, l)}")
    if not (mask.sum(axis=1) >= 1).all():
        raise ValueError("final_repr: row with no valid tokens")
    hidden = two_h // 2
    first = mask.argmax(axis=1)
    last = l - 1 - mask[:, ::-1].argmax(axis=1)
    pick_last = np.zeros((b, 1, l))
    pick_last[np.arange(b), 0, last] = 1.0
    pick_first = np.zeros((b, 1, l))
    pick_first[np.arange(b), 0, first] = 1.0
    fwd_part = T.reshape(T.matmul(Tensor(pick_last), g[:, :, :hidden]), (b, hidden))
    bwd_part = T.reshape(T.matmul(Tensor(pick_first), g[:, :, hidden:]), (b, hidden))
    return T.concat([fwd_part, bwd_part], axis=1)
