"""Reverse-mode differentiation over float64 numpy arrays.

A :class:`Tape` records every primitive applied to :class:`Var` handles in
execution order. :func:`tape_backward` replays the record in reverse and
accumulates adjoints, so each node is visited exactly once.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class TapeError(ValueError):
    pass


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("value", "tape", "index", "name", "requires_grad")

    def __init__(self, value, tape, index, name=None, requires_grad=True):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        label = self.name or f"#{self.index}"
        return f"Var({label}, shape={self.value.shape})"


class Tape:
    """Ordered record of primitive operations.

    ``nodes[k]`` is ``(parents, backward)`` for the var at index ``k``; leaves
    have no parents. ``backward(g)`` returns one adjoint (or ``None``) per
    parent.
    """

    def __init__(self):
        self.nodes = []
        self.vars = []
        self.params = {}

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, parents, backward, name=None, requires_grad=True):
        v = Var(value, self, len(self.nodes), name, requires_grad)
        self.nodes.append((parents, backward))
        self.vars.append(v)
        return v

    def param(self, name, value):
        """Register a trainable leaf."""
        if name in self.params:
            raise TapeError(f"parameter {name!r} already on tape")
        value = np.asarray(value, dtype=DTYPE)
        v = self._push(value, (), None, name=name)
        self.params[name] = v
        return v

    def const(self, value, name=None):
        """Register a leaf that never receives a gradient."""
        return self._push(np.asarray(value, dtype=DTYPE), (), None, name=name, requires_grad=False)

    def record(self, value, parents, backward):
        needs = any(p.requires_grad for p in parents)
        if not needs:
            return self._push(value, (), None, requires_grad=False)
        return self._push(value, tuple(parents), backward)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TapeError("operation needs at least one Var operand")


def _lift(tape, x):
    if isinstance(x, Var):
        if x.tape is not tape:
            raise TapeError("operands recorded on different tapes")
        return x
    return tape.const(x)


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def tape_backward(tape, loss):
    """Return ``{param name: d loss / d param}`` for every parameter on ``tape``.

    Parameters the loss does not depend on get zero arrays.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise TapeError("loss must be a Var recorded on this tape")
    if loss.value.size != 1:
        raise TapeError(f"loss must be scalar, got shape {loss.value.shape}")
    grads = [None] * len(tape.nodes)
    grads[loss.index] = np.ones_like(loss.value)
    for k in range(loss.index, -1, -1):
        g = grads[k]
        if g is None:
            continue
        parents, backward = tape.nodes[k]
        if backward is None:
            continue
        outs = backward(g)
        for p, pg in zip(parents, outs):
            if pg is None or not p.requires_grad:
                continue
            if p.index >= k:
                raise TapeError(f"cycle: node {k} depends on later node {p.index}")
            if grads[p.index] is None:
                grads[p.index] = pg
            else:
                grads[p.index] = grads[p.index] + pg
        grads[k] = None
    out = {}
    for name, v in tape.params.items():
        g = grads[v.index]
        out[name] = np.zeros_like(v.value) if g is None else np.asarray(g, dtype=DTYPE).reshape(v.value.shape)
    return out


# -- elementwise ---------------------------------------------------------------

def add(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    sa, sb = a.value.shape, b.value.shape
    return t.record(a.value + b.value, (a, b),
                    lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    sa, sb = a.value.shape, b.value.shape
    return t.record(a.value - b.value, (a, b),
                    lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    av, bv = a.value, b.value
    return t.record(av * bv, (a, b),
                    lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def scale(a, c):
    c = float(c)
    return a.tape.record(a.value * c, (a,), lambda g: (g * c,))


def add_n(xs):
    """Sum of same-shaped vars as one node."""
    xs = list(xs)
    t = _tape_of(*xs)
    xs = [_lift(t, x) for x in xs]
    total = xs[0].value.copy()
    for x in xs[1:]:
        total += x.value
    return t.record(total, xs, lambda g: tuple(g for _ in xs))


def tanh(a):
    y = np.tanh(a.value)
    return a.tape.record(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = _sigmoid(a.value)
    return a.tape.record(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    y = np.exp(a.value)
    return a.tape.record(y, (a,), lambda g: (g * y,))


def log(a):
    x = a.value
    return a.tape.record(np.log(x), (a,), lambda g: (g / x,))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- shape ---------------------------------------------------------------------

def reshape(a, shape):
    old = a.value.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    y = np.transpose(a.value, axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))
    return a.tape.record(y, (a,), lambda g: (np.transpose(g, inv),))


def concat(xs, axis=0):
    xs = list(xs)
    t = _tape_of(*xs)
    xs = [_lift(t, x) for x in xs]
    sizes = [x.value.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]
    y = np.concatenate([x.value for x in xs], axis=axis)
    return t.record(y, xs, lambda g: tuple(np.split(g, bounds, axis=axis)))


def take(a, index, axis=0):
    """Gather along ``axis`` with an integer index array of any shape."""
    index = np.asarray(index, dtype=np.intp)
    src_shape = a.value.shape
    y = np.take(a.value, index, axis=axis)

    def backward(g):
        moved = np.moveaxis(np.zeros(src_shape, dtype=DTYPE), axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + index.ndim)), list(range(index.ndim)))
        np.add.at(moved, index, gm)
        return (np.moveaxis(moved, 0, axis),)

    return a.tape.record(y, (a,), backward)


def take_along(a, index, axis):
    """``np.take_along_axis`` with a same-rank index; used for per-row permutations."""
    index = np.asarray(index, dtype=np.intp)
    y = np.take_along_axis(a.value, index, axis=axis)
    shape = a.value.shape

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        idx = list(np.indices(g.shape))
        idx[axis] = np.broadcast_to(index, g.shape)
        np.add.at(out, tuple(idx), g)
        return (out,)

    return a.tape.record(y, (a,), backward)


# -- reductions / linear algebra ----------------------------------------------

def sum_(a, axis=None, keepdims=False):
    shape = a.value.shape
    y = np.sum(a.value, axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape.record(np.asarray(y, dtype=DTYPE), (a,), backward)


def dot(a, b):
    """Inner product of two vectors."""
    return sum_(mul(a, b))


def matmul(a, b):
    t = _tape_of(a, b)
    a, b = _lift(t, a), _lift(t, b)
    av, bv = a.value, b.value
    if av.ndim == 1 or bv.ndim == 1:
        raise TapeError("matmul expects operands with ndim >= 2")

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return unbroadcast(ga, av.shape), unbroadcast(gb, bv.shape)

    return t.record(av @ bv, (a, b), backward)


def masked_softmax(a, mask=None, axis=-1):
    """Softmax along ``axis``; entries with ``mask == 0`` get exactly zero weight."""
    x = a.value
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    y = e / np.where(s > 0, s, 1.0)

    def backward(g):
        inner = np.sum(g * y, axis=axis, keepdims=True)
        return (y * (g - inner),)

    return a.tape.record(y, (a,), backward)


def softmax(a, axis=-1):
    return masked_softmax(a, None, axis)


def cross_entropy(logits, targets, mask=None):
    """Summed negative log-likelihood of integer ``targets`` under softmax(logits).

    ``logits`` has shape ``(..., V)``; ``targets`` and ``mask`` have the
    leading shape. Masked positions contribute nothing.
    """
    x = logits.value
    targets = np.asarray(targets, dtype=np.intp)
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    w = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=DTYPE)
    loss = -(picked * w).sum()

    def backward(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None],
                          np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (p * (w[..., None] * float(g)),)

    return logits.tape.record(np.asarray(loss, dtype=DTYPE), (logits,), backward)


def dropout(a, rate, training, rng):
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = rng.random(a.value.shape) >= rate
    mask = keep / (1.0 - rate)
    return a.tape.record(a.value * mask, (a,), lambda g: (g * mask,))


def const_matmul(a, x):
    """``a @ x`` for a constant (dense or scipy sparse) matrix ``a``."""
    y = np.asarray(a @ x.value)
    at = a.T
    return x.tape.record(y, (x,), lambda g: (np.asarray(at @ g),))
