"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

A Tensor wraps one numpy array.  Each op computes its numpy result and, when
any input requires grad, attaches a backward closure plus parent references;
`backward()` walks the resulting tape in reverse topological order exactly
once.  Gradients accumulate across repeated backward calls until the caller
zeroes them, which is what lets one optimizer step sum contributions from
several loss terms.

Everything is float64 and reductions keep numpy's deterministic in-order
summation, so repeated runs are bit-identical.
"""

import numpy as np

from .errors import InputError, ShapeError, ZeroNormError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=float)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise InputError("backward() on a tensor that does not require grad")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # arithmetic sugar; constants are wrapped on the fly
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(out.data)
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g, b.shape)

    return _make(out_data, (a, b), backward)


def add_bias(x, bias):
    """Row-broadcast bias add: x (R, C) + bias (C,)."""
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.data.ndim != 1 or x.data.ndim != 2 or bias.shape[0] != x.shape[1]:
        raise ShapeError(f"add_bias: x {x.shape} vs bias {bias.shape}")
    return add(x, bias)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(g, b.shape)

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * b.data, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * a.data, b.shape)

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g / b.data, a.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.shape)

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul is 2-D only")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.grad += g @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ g

    return _make(out_data, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0.0)

    def backward(g):
        x.grad += g * mask

    return _make(out_data, (x,), backward)


def log2(x):
    """Elementwise log base 2; domain x > 0."""
    x = as_tensor(x)
    out_data = np.log2(x.data)
    inv_ln2 = 1.0 / np.log(2.0)

    def backward(g):
        x.grad += g * inv_ln2 / x.data

    return _make(out_data, (x,), backward)


def concat_rows(parts):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise InputError("concat_rows of nothing")
    out_data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.shape[0] for p in parts]

    def backward(g):
        start = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                p.grad += g[start:start + s]
            start += s

    return _make(out_data, tuple(parts), backward)


def concat_cols(parts):
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise InputError("concat_cols of nothing")
    out_data = np.concatenate([p.data for p in parts], axis=1)
    sizes = [p.shape[1] for p in parts]

    def backward(g):
        start = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                p.grad += g[:, start:start + s]
            start += s

    return _make(out_data, tuple(parts), backward)


def take_rows(x, indices):
    """Gather rows; backward scatter-adds (duplicate indices accumulate)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=int)
    out_data = x.data[idx]

    def backward(g):
        np.add.at(x.grad, idx, g)

    return _make(out_data, (x,), backward)


def max_over_rows(x):
    """Column-wise maximum across rows: (R, C) -> (1, C).

    Ties route the incoming gradient to the lowest row index only, matching
    numpy argmax.
    """
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"max_over_rows needs a non-empty 2-D input, got {x.shape}")
    arg = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])
    out_data = x.data[arg, cols][None, :]

    def backward(g):
        np.add.at(x.grad, (arg, cols), g[0])

    return _make(out_data, (x,), backward)


def squared_magnitude_halves(x):
    """Pair column c with column c + C/2 and return their squared magnitude.

    For x = [Re | Im] blocks of complex entries this yields |z|^2 per entry:
    out[:, c] = x[:, c]^2 + x[:, c + C/2]^2.
    """
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] % 2 != 0:
        raise ShapeError(f"squared_magnitude_halves needs an even column count, got {x.shape}")
    half = x.shape[1] // 2
    re, im = x.data[:, :half], x.data[:, half:]
    out_data = re * re + im * im

    def backward(g):
        x.grad[:, :half] += 2.0 * re * g
        x.grad[:, half:] += 2.0 * im * g

    return _make(out_data, (x,), backward)


def frobenius_normalize_scale(x, scale):
    """scale * x / ||x||_F with the full quotient differentiated.

    Raises ZeroNormError on a zero matrix rather than emitting NaNs.
    """
    x = as_tensor(x)
    norm = float(np.sqrt(np.sum(x.data * x.data)))
    if norm == 0.0:
        raise ZeroNormError("cannot normalize a matrix with zero Frobenius norm")
    scale = float(scale)
    out_data = (scale / norm) * x.data

    def backward(g):
        dot = np.sum(g * x.data)
        x.grad += (scale / norm) * g - (scale * dot / norm ** 3) * x.data

    return _make(out_data, (x,), backward)


def reduce_sum(x, axis=None):
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            x.grad += g  # g is scalar-shaped
        else:
            x.grad += np.expand_dims(g, axis)

    return _make(out_data, (x,), backward)


def reduce_mean(x, axis=None):
    x = as_tensor(x)
    out_data = x.data.mean(axis=axis)
    count = x.size if axis is None else x.shape[axis]

    def backward(g):
        if axis is None:
            x.grad += g / count
        else:
            x.grad += np.expand_dims(g, axis) / count

    return _make(out_data, (x,), backward)


class Adam:
    """Adam with the step-decayed learning rate used throughout the package.

    lr starts at 1e-3 and is multiplied by `decay` after every
    `decay_every` calls to step(); betas follow the common defaults.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 decay=0.995, decay_every=100):
        self.params = [p for p in params]
        if not all(p.requires_grad for p in self.params):
            raise InputError("Adam needs parameters with requires_grad=True")
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.decay, self.decay_every = decay, int(decay_every)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        if self.t % self.decay_every == 0:
            self.lr *= self.decay

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
