"""Dense-tensor core with reverse-mode differentiation.

Exactly the primitives a small GPT-style decoder needs: matmul, add/mul
with trailing-dimension broadcasting, transpose/reshape/slice/concat,
embedding row gather, row softmax, layer norm, tanh-GELU, and a stable
cross-entropy-over-logits loss. Default compute is float32; building the
leaf tensors as float64 gives the shadow mode used by the numeric
gradient oracle.

Every op records a backward closure on its output; backward(loss) walks
the recorded graph in reverse execution order. Any op that would produce
a NaN/Inf raises instead of propagating it.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError

GELU_COEF = math.sqrt(2.0 / math.pi)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")


class Tensor:
    """N-d float array plus the autodiff bookkeeping for one graph node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            if isinstance(data, (np.ndarray, np.generic)) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = np.float32
        self.data = np.asarray(data, dtype=dtype)
        _check_finite(self.data, "tensor construction")
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self._backward_ran = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    out = Tensor(data)  # constructor runs the finite check
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
    return out


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += grad


def _reduce_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out the leading axes a trailing-dimension broadcast introduced."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _broadcast_ok(a_shape: tuple[int, ...], b_shape: tuple[int, ...]) -> bool:
    small, big = sorted((a_shape, b_shape), key=len)
    return big[len(big) - len(small):] == small


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; the smaller operand may broadcast over leading axes."""
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if not _broadcast_ok(a.shape, b.shape):
        raise ValueError(f"add: shapes {a.shape} and {b.shape} do not conform")
    out = _result(a.data + b.data, (a, b), "add")

    def backward():
        _accumulate(a, _reduce_to_shape(out.grad, a.shape))
        _accumulate(b, _reduce_to_shape(out.grad, b.shape))

    out._backward = backward
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; scalars and trailing-shape tensors broadcast."""
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if not _broadcast_ok(a.shape, b.shape):
        raise ValueError(f"mul: shapes {a.shape} and {b.shape} do not conform")
    out = _result(a.data * b.data, (a, b), "mul")

    def backward():
        _accumulate(a, _reduce_to_shape(out.grad * b.data, a.shape))
        _accumulate(b, _reduce_to_shape(out.grad * a.data, b.shape))

    out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-d, or batched with identical leading axes."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul: need >=2-d operands, got {a.shape} and {b.shape}")
    if a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    out = _result(a.data @ b.data, (a, b), "matmul")

    def backward():
        _accumulate(a, out.grad @ b.data.swapaxes(-1, -2))
        _accumulate(b, a.data.swapaxes(-1, -2) @ out.grad)

    out._backward = backward
    return out


def transpose(x: Tensor, axis0: int = -2, axis1: int = -1) -> Tensor:
    if x.data.ndim < 2:
        raise ValueError(f"transpose: need >=2-d input, got {x.shape}")
    out = _result(x.data.swapaxes(axis0, axis1), (x,), "transpose")

    def backward():
        _accumulate(x, out.grad.swapaxes(axis0, axis1))

    out._backward = backward
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = _result(x.data.reshape(shape), (x,), "reshape")

    def backward():
        _accumulate(x, out.grad.reshape(x.shape))

    out._backward = backward
    return out


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """View of x[..., start:stop]; backward zero-pads back to the full width."""
    if not (0 <= start < stop <= x.shape[-1]):
        raise ValueError(f"slice_last: [{start}:{stop}] out of range for {x.shape}")
    out = _result(x.data[..., start:stop].copy(), (x,), "slice_last")

    def backward():
        if x.requires_grad:
            x.grad[..., start:stop] += out.grad

    out._backward = backward
    return out


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the first axis; backward splits the gradient."""
    if not tensors:
        raise ValueError("concat_rows: empty input")
    out = _result(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), "concat_rows")

    def backward():
        offset = 0
        for t in tensors:
            n = t.shape[0]
            _accumulate(t, out.grad[offset:offset + n])
            offset += n

    out._backward = backward
    return out


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-d table: out[i] = table[ids[i]]."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ValueError(f"embedding_lookup: table must be 2-d, got {table.shape}")
    if ids.ndim != 1:
        raise ValueError(f"embedding_lookup: ids must be 1-d, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding_lookup: id out of range for table with {table.shape[0]} rows")
    out = _result(table.data[ids], (table,), "embedding_lookup")

    def backward():
        if table.requires_grad:
            np.add.at(table.grad, ids, out.grad)

    out._backward = backward
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Exp-normalize over the last axis with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=-1, keepdims=True)
    out = _result(y, (x,), "softmax_rows")

    def backward():
        if x.requires_grad:
            inner = (out.grad * y).sum(axis=-1, keepdims=True)
            _accumulate(x, (out.grad - inner) * y)

    out._backward = backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-vector zero-mean/unit-variance normalization over the last axis, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm: gain/bias must have shape ({d},), got {gain.shape}/{bias.shape}")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = _result(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm")

    def backward():
        go = out.grad
        _accumulate(gain, _reduce_to_shape(go * xhat, gain.shape))
        _accumulate(bias, _reduce_to_shape(go, bias.shape))
        if x.requires_grad:
            gxhat = go * gain.data
            term = gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, term * inv_std)

    out._backward = backward
    return out


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    inner = GELU_COEF * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)
    out = _result(0.5 * x.data * (1.0 + t), (x,), "gelu")

    def backward():
        if x.requires_grad:
            d_inner = GELU_COEF * (1.0 + 3 * 0.044715 * x.data ** 2)
            grad = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * d_inner
            _accumulate(x, out.grad * grad)

    out._backward = backward
    return out


def cross_entropy_logits(logits: Tensor, targets, ignore_id: int | None = None) -> Tensor:
    """Mean of -log softmax(logits)[target] over non-ignored positions."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy_logits: logits must be 2-d, got {logits.shape}")
    t, v = logits.shape
    if targets.shape != (t,):
        raise ValueError(f"cross_entropy_logits: targets shape {targets.shape} != ({t},)")
    keep = np.ones(t, dtype=bool) if ignore_id is None else targets != ignore_id
    bad = keep & ((targets < 0) | (targets >= v))
    if bad.any():
        raise ValueError(f"cross_entropy_logits: target {targets[bad][0]} out of range for {v} classes")
    n = int(keep.sum())
    if n == 0:
        raise ValueError("cross_entropy_logits: every position is ignored")
    m = logits.data.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits.data - m).sum(axis=-1))
    safe_targets = np.where(keep, targets, 0)
    picked = logits.data[np.arange(t), safe_targets]
    loss = float(((lse - picked) * keep).sum() / n)
    out = _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), "cross_entropy_logits")

    def backward():
        if logits.requires_grad:
            p = np.exp(logits.data - lse[:, None])
            p[np.arange(t), safe_targets] -= 1.0
            p[~keep] = 0.0
            _accumulate(logits, p * (out.grad / n))

    out._backward = backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _result(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), "sum_all")

    def backward():
        if x.requires_grad:
            x.grad += out.grad

    out._backward = backward
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad for every requires_grad tensor reachable from loss."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._backward_ran:
        raise RuntimeError("backward already ran for this loss; rebuild the graph or reset first")
    loss._backward_ran = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    for node in topo:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    Run with float64 inputs; float32 rounding swamps the finite-difference
    signal. The relative error per element is |a - n| / max(1e-8, |a| + |n|).
    """
    for t in inputs:
        t.zero_grad()
    loss = f(*inputs)
    backward(loss)
    analytic = [t.grad.copy() for t in inputs]

    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f(*inputs).data)
            flat[i] = orig - eps
            down = float(f(*inputs).data)
            flat[i] = orig
            numeric[i] = (up - down) / (2 * eps)
        numeric = numeric.reshape(t.shape)
        denom = np.maximum(1e-8, np.abs(a) + np.abs(numeric))
        worst = max(worst, float((np.abs(a - numeric) / denom).max()))
    return worst
