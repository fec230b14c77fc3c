"""Reverse-mode automatic differentiation on dense numpy arrays.

The engine is eager: every operation computes its value immediately and
records its parents together with a pull-back closure, so the implicit
computation graph is acyclic by construction and ``backward`` only has to
replay the tape in reverse topological order.

The operation set is deliberately small, just enough to express the models
in this package: matmul, add, mul, concat, slicing, softmax with an
additive mask, layer_norm, relu, sigmoid, exp, log (with an optional
floor), sum, masked mean pooling, dropout and embedding lookup.

Float32 is the training/serving precision. Gradient checks run the same
code in float64, where central finite differences have enough headroom.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "parameter",
    "add",
    "mul",
    "matmul",
    "concat",
    "softmax",
    "layer_norm",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "tensor_sum",
    "mean",
    "mean_over_mask",
    "dropout",
    "embedding",
    "backward",
    "gradients",
    "zero_grads",
    "named_rng",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff.

    ``data`` is never mutated by operations; optimizers update parameter
    tensors in place between graph constructions, which is safe because a
    graph never outlives an optimizer step.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, op: str | None = None,
                 name: str | None = None, _parents: tuple = (), _backward=None):
        self.data = _as_float_array(data, dtype)
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"tensor {name or op or ''} contains non-finite values")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def label(self) -> str:
        return self.name or self.op or "tensor"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        backward(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self) -> "Tensor":
        return mean(self)

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]
        if np.isscalar(out_data) or out_data.ndim == 0:
            out_data = np.asarray(out_data)

        def _bw(g, t=self, key=key):
            gp = np.zeros_like(t.data)
            gp[key] += g
            t._accumulate(gp)

        return _node(out_data, (self,), _bw, "slice")

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.dtype)))

    def __sub__(self, other):
        return add(self, -_wrap(other, self.dtype))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), -self)

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division is not an engine op; divide by a scalar")
        return mul(self, Tensor(np.asarray(1.0 / scalar, dtype=self.dtype)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, op={self.op!r}{tag})"


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data, name: str, dtype=None) -> Tensor:
    """A leaf tensor that optimizers update and ``backward`` fills gradients for."""
    return Tensor(data, requires_grad=True, dtype=dtype, name=name)


def _node(data: np.ndarray, parents: tuple, bw, op: str) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, op=op, _parents=parents, _backward=bw if req else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.label()} {a.shape} with {b.label()} {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise and linear-algebra operations


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def _bw(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), _bw, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def _bw(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), _bw, "mul")


def matmul(a: Tensor, b: Tensor, transpose_a: bool = False, transpose_b: bool = False) -> Tensor:
    """Batched matrix product with optional transposition of the last two axes."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must have ndim >= 2, got {a.shape} and {b.shape}")
    ad = np.swapaxes(a.data, -1, -2) if transpose_a else a.data
    bd = np.swapaxes(b.data, -1, -2) if transpose_b else b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions disagree for {a.label()} {ad.shape} @ {b.label()} {bd.shape}")
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(
            f"matmul: batch dimensions incompatible for {a.label()} {ad.shape} @ {b.label()} {bd.shape}") from None

    def _bw(g, a=a, b=b, ad=ad, bd=bd):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            if transpose_a:
                ga = np.swapaxes(ga, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(ad, -1, -2), g)
            if transpose_b:
                gb = np.swapaxes(gb, -1, -2)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _node(out, (a, b), _bw, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: shapes " + ", ".join(str(t.shape) for t in tensors)
            + f" incompatible along axis {axis}") from None
    ax = axis % out.ndim
    sizes = [t.shape[ax] for t in tensors]

    def _bw(g, tensors=tuple(tensors), ax=ax, sizes=tuple(sizes)):
        start = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(start, start + size)
                t._accumulate(g[tuple(idx)])
            start += size

    return _node(out, tuple(tensors), _bw, "concat")


def softmax(t: Tensor, axis: int = -1, additive_mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax; masked positions get a large negative logit."""
    logits = t.data
    if additive_mask is not None:
        logits = logits + additive_mask
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _bw(g, t=t, out=out, axis=axis):
        if t.requires_grad:
            dot = (g * out).sum(axis=axis, keepdims=True)
            t._accumulate(out * (g - dot))

    return _node(out, (t,), _bw, "softmax")


def layer_norm(t: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalization over the last axis with learned scale and shift."""
    d = t.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({d},)")
    mu = t.data.mean(axis=-1, keepdims=True)
    var = ((t.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (t.data - mu) * inv
    out = gamma.data * xhat + beta.data

    def _bw(g, t=t, gamma=gamma, beta=beta, xhat=xhat, inv=inv):
        lead = tuple(range(g.ndim - 1))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=lead))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=lead))
        if t.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            t._accumulate(inv * (gx - m1 - xhat * m2))

    return _node(out, (t, gamma, beta), _bw, "layer_norm")


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def _bw(g, t=t, mask=mask):
        if t.requires_grad:
            t._accumulate(g * mask)

    return _node(np.where(mask, t.data, 0.0), (t,), _bw, "relu")


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def _bw(g, t=t, out=out):
        if t.requires_grad:
            t._accumulate(g * out * (1.0 - out))

    return _node(out, (t,), _bw, "sigmoid")


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)

    def _bw(g, t=t, out=out):
        if t.requires_grad:
            t._accumulate(g * out)

    return _node(out, (t,), _bw, "exp")


def log(t: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log; with ``floor`` > 0 the input is clamped from below first.

    Below the floor the clamped function is constant, so the gradient there
    is exactly zero.
    """
    x = np.maximum(t.data, floor) if floor > 0.0 else t.data
    if np.any(x <= 0.0):
        raise ValueError("log: non-positive input; pass a floor for clamped evaluation")
    out = np.log(x)

    def _bw(g, t=t, x=x, floor=floor):
        if t.requires_grad:
            gx = g / x
            if floor > 0.0:
                gx = np.where(t.data >= floor, gx, 0.0)
            t._accumulate(gx)

    return _node(out, (t,), _bw, "log")


def tensor_sum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = t.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g, t=t, axis=axis, keepdims=keepdims):
        if not t.requires_grad:
            return
        if axis is None:
            t._accumulate(np.full(t.shape, g))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            t._accumulate(np.broadcast_to(g, t.shape).copy())

    return _node(out, (t,), _bw, "sum")


def mean(t: Tensor) -> Tensor:
    """Mean over all entries, composed from sum and a scalar weight."""
    if t.size == 0:
        raise ValueError("mean: empty tensor")
    return tensor_sum(t) * (1.0 / t.size)


def mean_over_mask(t: Tensor, valid: np.ndarray) -> Tensor:
    """Per-row mean of ``t`` (B x L x d) over positions where ``valid`` (B x L) is True."""
    if t.data.ndim != 3 or valid.shape != t.shape[:2]:
        raise ShapeError(f"mean_over_mask: expected (B, L, d) with mask (B, L), got {t.shape} and {valid.shape}")
    counts = valid.sum(axis=1)
    if np.any(counts == 0):
        rows = np.nonzero(counts == 0)[0].tolist()
        raise ValueError(f"mean_over_mask: rows {rows} have no valid positions to pool")
    w = valid.astype(t.dtype)
    out = (t.data * w[:, :, None]).sum(axis=1) / counts[:, None]

    def _bw(g, t=t, w=w, counts=counts):
        if t.requires_grad:
            t._accumulate(g[:, None, :] * (w / counts[:, None])[:, :, None])

    return _node(out, (t,), _bw, "mean_over_mask")


def dropout(t: Tensor, rate: float, rng: np.random.Generator | None = None,
            training: bool = True) -> Tensor:
    """Inverted dropout. Identity when rate is 0 or in inference mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if rate == 0.0 or not training:
        return t
    if rng is None:
        raise ValueError("dropout: an explicit rng is required in training mode")
    keep = (rng.random(t.shape) >= rate).astype(t.dtype) / (1.0 - rate)

    def _bw(g, t=t, keep=keep):
        if t.requires_grad:
            t._accumulate(g * keep)

    return _node(t.data * keep, (t,), _bw, "dropout")


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup into ``table`` (V x d) by an integer index array."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("embedding: indices must be integers")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"embedding: index out of range [0, {n}) in lookup into {table.label()}")

    def _bw(g, table=table, idx=idx):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx.reshape(-1), g.reshape(-1, g.shape[-1]))
            table._accumulate(gt)

    return _node(table.data[idx], (table,), _bw, "embedding")


# ---------------------------------------------------------------------------
# backward pass


def topo_order(root: Tensor) -> list[Tensor]:
    """Parents-first topological order of the graph below ``root`` (iterative DFS)."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` for every tensor below ``loss``."""
    if loss.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any tensor with requires_grad")
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo_order(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Run backward and return a fresh name -> gradient map for ``params``."""
    zero_grads(params.values())
    backward(loss)
    return {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
            for name, p in params.items()}


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# randomness


def named_rng(seed: int, name: str = "") -> np.random.Generator:
    """Counter-based generator for an explicit (seed, name) pair.

    Streams for different names are independent and reproducible across
    processes; nothing global is touched.
    """
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))
