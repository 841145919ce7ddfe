"""A small reverse-mode differentiation core over numpy arrays.

Graphs are built eagerly, one per sentence, and discarded after
``backward``.  Only the handful of operations the parser needs exist; the
LSTM recurrence is a single node with its own backward pass so a sentence
costs a few dozen graph nodes rather than thousands.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad=False, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad and not parents else None
        self.parents: tuple[Tensor, ...] = parents
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))


def parameter(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _node(value, parents, backward_fn) -> Tensor:
    live = _grad_enabled and any(p.requires_grad for p in parents)
    if not live:
        return Tensor(value)
    return Tensor(value, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def back(g):
        ga = g @ b.value.T if b.value.ndim == 2 else np.outer(g, b.value)
        if a.value.ndim == 1:
            gb = np.outer(a.value, g)
        else:
            gb = a.value.T @ g
        return ga, gb

    return _node(a.value @ b.value, (a, b), back)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.value)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node(a.value * mask, (a,), lambda g: (g * mask,))


def total(a: Tensor) -> Tensor:
    return _node(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), back)


def take(a: Tensor, index) -> Tensor:
    """Gather rows of ``a``; ``index`` may have any shape, repeats accumulate."""
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.value[index], (a,), back)


def pick(a: Tensor, rows, cols) -> Tensor:
    """``a[rows, cols]`` for a 2-d tensor."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _node(a.value[rows, cols], (a,), back)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor, mask=None) -> Tensor:
    """Run a unidirectional LSTM over ``x`` of shape (T, B, D).

    Returns hidden states (T, B, H).  Gate blocks in the weight columns are
    input, forget, candidate, output.  Where ``mask[t, j]`` is 0 the state of
    sequence ``j`` is carried through unchanged, so with right-padding the
    last row holds each sequence's final state.
    """
    T, B, D = x.shape
    H = wh.shape[0]
    xw = (x.value.reshape(T * B, D) @ wx.value + b.value).reshape(T, B, 4 * H)
    m = np.ones((T, B, 1)) if mask is None else np.asarray(mask, dtype=DTYPE).reshape(T, B, 1)
    whv = wh.value
    hs = np.empty((T, B, H))
    gates = np.empty((T, B, 4 * H))
    cs_prev = np.empty((T, B, H))
    hs_prev = np.empty((T, B, H))
    tcs = np.empty((T, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xw[t] + h @ whv
        gt = gates[t]
        gt[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
        gt[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        gt[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
        i, f, gg, o = gt[:, :H], gt[:, H : 2 * H], gt[:, 2 * H : 3 * H], gt[:, 3 * H :]
        cs_prev[t] = c
        hs_prev[t] = h
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        tcs[t] = tc
        h_new = o * tc
        mt = m[t]
        c = mt * c_new + (1.0 - mt) * c
        h = mt * h_new + (1.0 - mt) * h
        hs[t] = h

    def back(g_hs):
        dxw = np.empty((T, B, 4 * H))
        dwh = np.zeros_like(whv)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            mt = m[t]
            dh = g_hs[t] + dh_next
            gt = gates[t]
            i, f, gg, o = gt[:, :H], gt[:, H : 2 * H], gt[:, 2 * H : 3 * H], gt[:, 3 * H :]
            tc = tcs[t]
            dh_new = mt * dh
            dc_new = mt * dc_next + dh_new * o * (1.0 - tc * tc)
            dz = np.empty((B, 4 * H))
            dz[:, :H] = dc_new * gg * i * (1.0 - i)
            dz[:, H : 2 * H] = dc_new * cs_prev[t] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc_new * i * (1.0 - gg * gg)
            dz[:, 3 * H :] = dh_new * tc * o * (1.0 - o)
            dxw[t] = dz
            dwh += hs_prev[t].T @ dz
            dh_next = dz @ whv.T + (1.0 - mt) * dh
            dc_next = dc_new * f + (1.0 - mt) * dc_next
        flat = dxw.reshape(T * B, 4 * H)
        dx = (flat @ wx.value.T).reshape(T, B, D)
        dwx = x.value.reshape(T * B, D).T @ flat
        return dx, dwx, dwh, flat.sum(axis=0)

    return _node(hs, (x, wx, wh, b), back)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad += g
            continue
        for p, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
