"""Small reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations the tree and sequence models need are provided.  Row
gathers and segment sums let a whole batch of trees be evaluated level
by level with dense matrix products.

Every forward op adds its arithmetic cost to the active :class:`OpCounter`
(if any), which is how inference cost is measured against protocol size.
"""
from __future__ import annotations

import contextlib

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


# -- op counting -----------------------------------------------------------

class OpCounter:
    """Accumulates scalar arithmetic operations performed by forward ops."""

    def __init__(self):
        self.total = 0
        self.by_op: dict[str, int] = {}

    def add(self, op: str, n: int):
        self.total += int(n)
        self.by_op[op] = self.by_op.get(op, 0) + int(n)


_counter: OpCounter | None = None


@contextlib.contextmanager
def count_ops():
    global _counter
    prev, _counter = _counter, OpCounter()
    try:
        yield _counter
    finally:
        _counter = prev


def _count(op, n):
    if _counter is not None:
        _counter.add(op, n)


# -- tensors -----------------------------------------------------------------

class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name})"

    def zero_grad(self):
        self.grad = None

    def _acc(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode accumulation from a scalar root."""
        if self.data.size != 1:
            raise ShapeError("backward needs a scalar root")
        order = _topo(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t.backward_fn is not None and t.grad is not None:
                t.backward_fn(t.grad)

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __sub__(self, o): return sub(self, o)
    def __mul__(self, o): return mul(self, o)
    def __matmul__(self, o): return matmul(self, o)


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    on_path = set()
    while stack:
        t, done = stack.pop()
        if done:
            on_path.discard(id(t))
            order.append(t)
            continue
        if id(t) in seen:
            if id(t) in on_path:
                raise RuntimeError("cycle detected in computation graph")
            continue
        seen.add(id(t))
        on_path.add(id(t))
        stack.append((t, True))
        for p in t.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _out(data, parents, fn, op, cost):
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite output in {op}")
    _count(op, cost)
    t = Tensor(data, parents=parents)
    if t.requires_grad:
        t.backward_fn = fn
    return t


def const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(x, name=None) -> Tensor:
    return Tensor(np.array(x, dtype=DTYPE), requires_grad=True, name=name)


# -- elementwise ---------------------------------------------------------------

def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_bcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match") from None


def add(a, b) -> Tensor:
    a, b = const(a), const(b)
    shape = _check_bcast(a, b, "add")

    def fn(g):
        a._acc(_unbroadcast(g, a.shape))
        b._acc(_unbroadcast(g, b.shape))
    return _out(a.data + b.data, (a, b), fn, "add", np.prod(shape))


def sub(a, b) -> Tensor:
    a, b = const(a), const(b)
    shape = _check_bcast(a, b, "sub")

    def fn(g):
        a._acc(_unbroadcast(g, a.shape))
        b._acc(-_unbroadcast(g, b.shape))
    return _out(a.data - b.data, (a, b), fn, "sub", np.prod(shape))


def mul(a, b) -> Tensor:
    a, b = const(a), const(b)
    shape = _check_bcast(a, b, "mul")

    def fn(g):
        a._acc(_unbroadcast(g * b.data, a.shape))
        b._acc(_unbroadcast(g * a.data, b.shape))
    return _out(a.data * b.data, (a, b), fn, "mul", np.prod(shape))


def scale(a, s: float) -> Tensor:
    a = const(a)
    return _out(a.data * s, (a,), lambda g: a._acc(g * s), "scale", a.data.size)


def tanh(a) -> Tensor:
    a = const(a)
    y = np.tanh(a.data)
    return _out(y, (a,), lambda g: a._acc(g * (1.0 - y * y)), "tanh", y.size)


def sigmoid(a) -> Tensor:
    a = const(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _out(y, (a,), lambda g: a._acc(g * y * (1.0 - y)), "sigmoid", y.size)


def relu(a) -> Tensor:
    a = const(a)
    mask = a.data > 0
    return _out(a.data * mask, (a,), lambda g: a._acc(g * mask), "relu", a.data.size)


# -- linear algebra and indexing ----------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` for a 1-D or 2-D ``a`` and a 2-D ``b``."""
    a, b = const(a), const(b)
    if b.data.ndim != 2 or a.data.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not match")
    rows = 1 if a.data.ndim == 1 else a.shape[0]

    def fn(g):
        if a.requires_grad:
            a._acc(g @ b.data.T)
        if b.requires_grad:
            b._acc(np.outer(a.data, g) if a.data.ndim == 1 else a.data.T @ g)
    return _out(a.data @ b.data, (a, b), fn, "matmul", 2 * rows * b.shape[0] * b.shape[1])


def matvec(w, x) -> Tensor:
    """``W x`` for ``W`` of shape (n, d) and ``x`` of shape (d,)."""
    w, x = const(w), const(x)
    if w.data.ndim != 2 or x.data.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: shapes {w.shape} and {x.shape} do not match")
    return matmul(x, transpose(w))


def transpose(a) -> Tensor:
    a = const(a)
    return _out(a.data.T, (a,), lambda g: a._acc(g.T), "transpose", 0)


def gather_rows(a, idx) -> Tensor:
    a = const(a)
    idx = np.asarray(idx, dtype=np.int64)

    def fn(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, idx, g)
            a._acc(acc)
    return _out(a.data[idx], (a,), fn, "gather", 0)


def segment_sum(a, seg, n: int) -> Tensor:
    """Row sums grouped by ``seg``: out[s] = sum of a[i] with seg[i] == s."""
    a = const(a)
    seg = np.asarray(seg, dtype=np.int64)
    out = np.zeros((n,) + a.shape[1:], dtype=DTYPE)
    np.add.at(out, seg, a.data)
    return _out(out, (a,), lambda g: a._acc(g[seg]), "segment_sum", a.data.size)


def concat(parts, axis=0) -> Tensor:
    parts = [const(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def fn(g):
        for p, gp in zip(parts, np.split(g, cuts, axis=axis)):
            p._acc(gp)
    return _out(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), fn, "concat", 0)


def slice_cols(a, lo: int, hi: int) -> Tensor:
    a = const(a)

    def fn(g):
        full = np.zeros_like(a.data)
        full[..., lo:hi] = g
        a._acc(full)
    return _out(a.data[..., lo:hi], (a,), fn, "slice", 0)


def sum_list(parts) -> Tensor:
    out = parts[0]
    for p in parts[1:]:
        out = add(out, p)
    return out


def total(a) -> Tensor:
    a = const(a)
    return _out(np.array(a.data.sum()), (a,), lambda g: a._acc(np.broadcast_to(g, a.shape)),
                "sum", a.data.size)


def mean(a) -> Tensor:
    return scale(total(a), 1.0 / const(a).data.size)


# -- probabilities -----------------------------------------------------------------

def softmax(a) -> Tensor:
    """Row-wise softmax with max subtraction."""
    a = const(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        a._acc(y * (g - (g * y).sum(axis=-1, keepdims=True)))
    return _out(y, (a,), fn, "softmax", 4 * y.size)


def cross_entropy(probs, labels) -> Tensor:
    """Mean negative log-probability of ``labels`` under row-wise ``probs``."""
    probs = const(probs)
    p2 = np.atleast_2d(probs.data)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if p2.shape[0] != labels.shape[0]:
        raise ShapeError("cross_entropy: one label per row required")
    rows = np.arange(len(labels))
    picked = p2[rows, labels]

    def fn(g):
        d = np.zeros_like(p2)
        d[rows, labels] = -g / (picked * len(labels))
        probs._acc(d.reshape(probs.shape))
    return _out(np.array(-np.log(picked).mean()), (probs,), fn, "cross_entropy", 2 * len(labels))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Fused softmax + cross-entropy; gradient is (p - y) / batch."""
    logits = const(logits)
    z = np.atleast_2d(logits.data)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -logp[rows, labels].mean()

    def fn(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        logits._acc((g * d / len(labels)).reshape(logits.shape))
    return _out(np.array(loss), (logits,), fn, "softmax_cross_entropy", 6 * z.size)


# -- optimiser ---------------------------------------------------------------------

class RMSprop:
    """v <- decay*v + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(v)+eps)."""

    def __init__(self, params, lr=0.001, decay=0.9, eps=1e-8):
        self.params = list(params)
        self.lr, self.decay, self.eps = lr, decay, eps
        self.state = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        for p, v, g in zip(self.params, self.state, grads):
            rmsprop_step(p.data, g, v, self.lr, self.decay, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def rmsprop_step(theta, g, v, lr=0.001, decay=0.9, eps=1e-8):
    """In-place update of ``theta`` and running mean square ``v``."""
    if theta.shape != g.shape or v.shape != g.shape:
        raise ShapeError("rmsprop_step: shapes must match")
    v *= decay
    v += (1.0 - decay) * g * g
    theta -= lr * g / (np.sqrt(v) + eps)
    return theta, v


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_out, fan_in))
