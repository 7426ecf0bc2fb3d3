"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything the classifier computes is built from the primitives in this
module. Values live in contiguous numpy arrays; each operation records the
producing op and its inputs so that ``backward`` can walk the graph once,
in reverse topological order, accumulating adjoints. All vector-Jacobian
products are written out explicitly and checked against central finite
differences in the test suite.

Gradients accumulate additively into leaf tensors (anything created
directly with ``requires_grad=True``, including parameters). Calling
``backward`` twice on the same graph without resetting grads doubles them.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf, expit

LAYER_NORM_EPS = 1e-5

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (eval-mode forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 array plus an optional record of the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self):
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.data.shape}{op})"

    # Arithmetic sugar; scalars are lifted to constant tensors.
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


class Parameter(Tensor):
    """A trainable tensor with a stable name used in checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _record(data: np.ndarray, parents, vjp, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast, back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}") from None


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    na, nb = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g, a.data.shape) if na else None,
            _unbroadcast(g, b.data.shape) if nb else None,
        )

    return _record(a.data + b.data, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    na, nb = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g, a.data.shape) if na else None,
            _unbroadcast(-g, b.data.shape) if nb else None,
        )

    return _record(a.data - b.data, (a, b), vjp, "sub")


def mul(a: Tensor, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            _unbroadcast(g * bd, ad.shape) if na else None,
            _unbroadcast(g * ad, bd.shape) if nb else None,
        )

    return _record(ad * bd, (a, b), vjp, "mul")


def pow_const(x: Tensor, p: float) -> Tensor:
    """x ** p for a constant float exponent."""
    xd = x.data
    p = float(p)
    if p == 0.0:
        def vjp(g):
            return (np.zeros_like(xd),)
    else:
        def vjp(g):
            return (g * p * np.power(xd, p - 1.0),)

    return _record(np.power(xd, p), (x,), vjp, "pow")


# ---------------------------------------------------------------------------
# Matrix multiply


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape) if na else None
        gb = _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape) if nb else None
        return ga, gb

    return _record(np.matmul(ad, bd), (a, b), vjp, "matmul")


# ---------------------------------------------------------------------------
# Nonlinearities


def exp(x: Tensor) -> Tensor:
    out_d = np.exp(x.data)

    def vjp(g):
        return (g * out_d,)

    return _record(out_d, (x,), vjp, "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    if not (xd > 0).all():
        raise ValueError("log: non-positive input rejected")

    def vjp(g):
        return (g / xd,)

    return _record(np.log(xd), (x,), vjp, "log")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _record(s, (x,), vjp, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - t * t),)

    return _record(t, (x,), vjp, "tanh")


def relu(x: Tensor) -> Tensor:
    xd = x.data

    def vjp(g):
        return (g * (xd > 0),)

    return _record(np.maximum(xd, 0.0), (x,), vjp, "relu")


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-function GELU: 0.5 x (1 + erf(x / sqrt 2))."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def vjp(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return (g * (cdf + xd * pdf),)

    return _record(xd * cdf, (x,), vjp, "gelu")


def clamp_min(x: Tensor, lo: float) -> Tensor:
    """Elementwise max(x, lo); gradient flows only where x was not clamped."""
    xd = x.data
    keep = xd > lo

    def vjp(g):
        return (g * keep,)

    return _record(np.maximum(xd, lo), (x,), vjp, "clamp_min")


# ---------------------------------------------------------------------------
# Shape plumbing


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = x.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return _record(x.data.reshape(shape), (x,), vjp, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return _record(x.data.transpose(axes), (x,), vjp, "transpose")


def slice_(x: Tensor, key) -> Tensor:
    """Basic (non-fancy) indexing; the gradient scatters back into zeros."""
    xd = x.data
    full_shape = xd.shape

    def vjp(g):
        buf = np.zeros(full_shape, dtype=np.float64)
        buf[key] = g
        return (buf,)

    return _record(xd[key], (x,), vjp, "slice")


def concat(tensors, axis: int) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: empty input")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        if len(s) != len(base) or any(a != b for i, (a, b) in enumerate(zip(s, base)) if i != axis % len(base)):
            raise ValueError(f"concat: shape mismatch {tuple(base)} vs {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]
    needs = [t.requires_grad for t in tensors]

    def vjp(g):
        pieces = np.split(g, offsets, axis=axis)
        return tuple(p if need else None for p, need in zip(pieces, needs))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp, "concat")


# ---------------------------------------------------------------------------
# Reductions


def _sum_vjp_shape(g, in_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, in_shape).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, in_shape).copy()


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    in_shape = x.data.shape

    def vjp(g):
        return (_sum_vjp_shape(g, in_shape, axis, keepdims),)

    return _record(x.data.sum(axis=axis, keepdims=keepdims), (x,), vjp, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    in_shape = x.data.shape
    n = x.data.size if axis is None else x.data.shape[axis]

    def vjp(g):
        return (_sum_vjp_shape(g, in_shape, axis, keepdims) / n,)

    return _record(x.data.mean(axis=axis, keepdims=keepdims), (x,), vjp, "mean")


# ---------------------------------------------------------------------------
# Normalization, softmax, embedding, dropout


def layer_norm(x: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row (last axis) to zero mean, unit variance.

    No affine scale/shift here; gain and bias are separate parameters
    applied by the caller with mul/add.
    """
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (xd - mu) * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return ((g - gm - y * gym) * inv,)

    return _record(y, (x,), vjp, "layer_norm")


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax along the last axis restricted to mask==1 positions.

    Masked positions come out exactly 0; valid positions sum to 1. The max
    over valid positions is subtracted before exponentiation, so arbitrarily
    large scores do not overflow. Rows with no valid position are rejected.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("masked_softmax: mask must be binary")
    sd = scores.data
    try:
        m = np.broadcast_to(mask, sd.shape)
    except ValueError:
        raise ValueError(f"masked_softmax: shape mismatch {sd.shape} vs {mask.shape}") from None
    valid = m > 0
    if not valid.any(axis=-1).all():
        raise ValueError("masked_softmax: row with no valid positions")
    shifted = np.where(valid, sd, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)  # exp(-inf) == 0 at masked positions
    a = ex / ex.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * a).sum(axis=-1, keepdims=True)
        return (a * (g - dot),)

    return _record(a, (scores,), vjp, "masked_softmax")


def softmax(x: Tensor) -> Tensor:
    return masked_softmax(x, np.ones(x.shape[-1]))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup by integer index; the gradient scatter-adds into the table."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("embedding: ids must be integers")
    n_rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ValueError(f"embedding: id out of range for table with {n_rows} rows")
    dim = table.data.shape[1]
    tshape = table.data.shape

    def vjp(g):
        buf = np.zeros(tshape, dtype=np.float64)
        np.add.at(buf, ids.reshape(-1), g.reshape(-1, dim))
        return (buf,)

    return _record(table.data[ids], (table,), vjp, "embedding")


def dropout(x: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: keep with probability ``keep_prob``, scale by 1/keep."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"dropout: keep_prob must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return x
    scale = (rng.random(x.data.shape) < keep_prob) / keep_prob

    def vjp(g):
        return (g * scale,)

    return _record(x.data * scale, (x,), vjp, "dropout")


# ---------------------------------------------------------------------------
# Backward pass


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every requires-grad leaf's ``grad``.

    Adjoints of interior nodes live in a scratch map for the duration of the
    pass, so repeated backward calls on one graph add identical leaf
    contributions each time.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.data.shape}")

    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    adjoint = {id(root): np.ones_like(root.data)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.data.shape:
                raise AssertionError(
                    f"vjp shape bug in {node._op}: {pg.shape} vs {parent.data.shape}"
                )
            pid = id(parent)
            adjoint[pid] = pg if pid not in adjoint else adjoint[pid] + pg
