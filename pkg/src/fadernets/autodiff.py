"""Minimal reverse-mode autodiff over dense numpy arrays.

Exactly the primitives the sequence model needs: broadcasting elementwise
arithmetic, 2-D matmul, a few nonlinearities, reductions, concatenation and
slicing, embedding lookup, and fused softmax losses.  Gradients accumulate
by walking the tape in reverse topological order.  Dtype follows the leaf
tensors (float32 for training, float64 for gradient checking).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

Backward = Callable[[np.ndarray], None]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data: np.ndarray | float | list, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Backward | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar result through the recorded tape."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Operator sugar; every op is also available as a module function.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


class Parameter(Tensor):
    """A named, trainable leaf tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, value: np.ndarray):
        super().__init__(np.asarray(value), requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.data.shape})"


def _ensure(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, grad: np.ndarray, owned: bool = False) -> None:
    """Add a gradient contribution to t.

    owned=True promises the caller freshly allocated `grad` and will not
    reuse it, letting the first contribution be stored without a copy.
    """
    if not t.requires_grad:
        return
    reduced = _unbroadcast(grad, t.data.shape)
    if t.grad is None:
        fresh = owned or (reduced is not grad and reduced.base is None)
        t.grad = reduced if fresh else reduced.copy()
    else:
        t.grad += reduced


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _ensure(b, a)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _ensure(b, a)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, -g, owned=True)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _ensure(b, a)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * b.data, owned=True)
        _accumulate(b, g * a.data, owned=True)

    return _node(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape} disagree")

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T, owned=True)
        _accumulate(b, a.data.T @ g, owned=True)

    return _node(a.data @ b.data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * out_data, owned=True)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g / a.data, owned=True)

    return _node(np.log(a.data), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - out_data * out_data), owned=True)

    return _node(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * out_data * (1.0 - out_data), owned=True)

    return _node(out_data, (a,), backward)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def backward(g: np.ndarray) -> None:
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            expanded = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(expanded, a.data.shape))

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor) -> Tensor:
    return mul(tsum(a), 1.0 / a.data.size)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    extents = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward(g: np.ndarray) -> None:
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accumulate(t, g[tuple(index)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        full[index] = g
        _accumulate(a, full, owned=True)

    return _node(a.data[index], (a,), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return _node(a.data.T, (a,), backward)


def split_rows(a: Tensor, block: int) -> list[Tensor]:
    """Partition along axis 0 into equal blocks.

    Cheaper than repeated narrow() for sequence unrolling: each block's
    backward writes straight into the parent's gradient slice.
    """
    total = a.data.shape[0]
    if total % block:
        raise ShapeError(f"cannot split {total} rows into blocks of {block}")

    def make_backward(sl: slice) -> Backward:
        def backward(g: np.ndarray) -> None:
            if not a.requires_grad:
                return
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[sl] += g

        return backward

    out = []
    for start in range(0, total, block):
        sl = slice(start, start + block)
        out.append(_node(a.data[sl].copy(), (a,), make_backward(sl)))
    return out


def tile_rows(a: Tensor, reps: int) -> Tensor:
    """Repeat the whole array reps times along axis 0."""
    rows, cols = a.data.shape

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(reps, rows, cols).sum(axis=0), owned=True)

    return _node(np.tile(a.data, (reps, 1)), (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup (embedding); backward scatter-adds into the table."""
    indices = np.asarray(indices)
    if indices.min(initial=0) < 0 or (
        indices.size and indices.max() >= table.data.shape[0]
    ):
        raise IndexError("gather index out of range")

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(table.data)
        np.add.at(full, indices, g)
        _accumulate(table, full, owned=True)

    return _node(table.data[indices], (table,), backward)


def _softmax_data(z: np.ndarray, axis: int) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = 1) -> Tensor:
    out_data = _softmax_data(a.data, axis)

    def backward(g: np.ndarray) -> None:
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - inner), owned=True)

    return _node(out_data, (a,), backward)


def log_softmax(a: Tensor, axis: int = 1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - logz

    def backward(g: np.ndarray) -> None:
        p = np.exp(out_data)
        _accumulate(a, g - p * g.sum(axis=axis, keepdims=True), owned=True)

    return _node(out_data, (a,), backward)


def softmax_cross_entropy(
    logits: Tensor, targets: np.ndarray, weights: np.ndarray | None = None
) -> Tensor:
    """Mean softmax NLL over rows; optional per-row weights (e.g. pad masks).

    With weights the result is sum(w * nll) / sum(w).
    """
    targets = np.asarray(targets)
    n, n_classes = logits.data.shape
    if targets.min(initial=0) < 0 or (targets.size and targets.max() >= n_classes):
        raise IndexError("target class index out of range")
    p = _softmax_data(logits.data, axis=1)
    rows = np.arange(n)
    nll = -np.log(np.maximum(p[rows, targets], np.finfo(p.dtype).tiny))
    if weights is None:
        scale = np.full(n, 1.0 / n, dtype=logits.data.dtype)
        value = nll.mean()
    else:
        weights = np.asarray(weights, dtype=logits.data.dtype)
        total = weights.sum()
        scale = weights / total
        value = (nll * scale).sum()

    def backward(g: np.ndarray) -> None:
        d = p.copy()
        d[rows, targets] -= 1.0
        _accumulate(logits, d * (g * scale)[:, None], owned=True)

    return _node(np.asarray(value, dtype=logits.data.dtype), (logits,), backward)


def gaussian_sample(mu: Tensor, log_sigma: Tensor, noise: np.ndarray) -> Tensor:
    """Reparameterized draw z = mu + exp(log_sigma) * noise."""
    if mu.data.shape != log_sigma.data.shape or mu.data.shape != np.shape(noise):
        raise ShapeError("gaussian_sample operands must share one shape")
    return add(mu, mul(exp(log_sigma), Tensor(np.asarray(noise, dtype=mu.data.dtype))))


def kl_diag_gaussians_per_sample(
    mu_q: Tensor, log_sigma_q: Tensor, mu_p: Tensor, sigma_p: float
) -> Tensor:
    """KL(q || p) with p = N(mu_p, sigma_p^2 I), summed over dims -> [B, 1].

    mu_p may be a single [1, D] row broadcast against the whole batch.
    """
    if mu_q.data.shape != log_sigma_q.data.shape:
        raise ShapeError("KL operands must share one shape")
    try:
        np.broadcast_shapes(mu_q.data.shape, mu_p.data.shape)
    except ValueError as exc:
        raise ShapeError("prior mean is not broadcastable to the posterior") from exc
    var_p = sigma_p * sigma_p
    diff = sub(mu_q, mu_p)
    quad = mul(add(exp(mul(log_sigma_q, 2.0)), mul(diff, diff)), 1.0 / (2.0 * var_p))
    per_dim = add(sub(quad, log_sigma_q), float(np.log(sigma_p)) - 0.5)
    return tsum(per_dim, axis=1, keepdims=True)


def kl_diag_gaussians(
    mu_q: Tensor, log_sigma_q: Tensor, mu_p: Tensor, sigma_p: float
) -> Tensor:
    """Closed-form diagonal-Gaussian KL, summed over dims, averaged over batch."""
    return tmean(kl_diag_gaussians_per_sample(mu_q, log_sigma_q, mu_p, sigma_p))
