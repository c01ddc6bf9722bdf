"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A dynamic graph of :class:`Tensor` nodes is built as ops execute; calling
``backward()`` on a scalar walks the graph in reverse topological order and
accumulates gradients into every tensor created with ``requires_grad=True``.
Interior gradients are freed as soon as they are consumed, so backpropagating
twice through a shared subgraph adds contributions instead of double counting.

Everything is float64: the losses in this package are checked against central
finite differences at step 1e-4, which float32 cannot resolve.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction (evaluation rollouts, finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient "
                                 "requires a scalar tensor")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node._backward is None:
                continue
            g = node.grad
            if g is None:
                continue
            node._backward(g)
            node.grad = None  # interior grads are consumed exactly once

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# -- arithmetic -------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = _wrap(a)

        def back_const(g, a=a):
            _accum(a, g)

        return _make(a.data + b, (a,), back_const)
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")

    def back(g, a=a, b=b):
        _accum(a, g)
        _accum(b, g)

    return _make(a.data + b.data, (a, b), back)


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch {a.data.shape} vs {b.data.shape}")

    def back(g, a=a, b=b):
        _accum(a, g)
        _accum(b, -g)

    return _make(a.data - b.data, (a, b), back)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        def back_const(g, a=a, b=b):
            _accum(a, g * b)

        return _make(a.data * b, (a,), back_const)
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ValueError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")

    def back(g, a=a, b=b):
        ga = g * b.data
        gb = g * a.data
        if ga.shape != a.data.shape:  # a was the scalar side
            ga = ga.sum()
        if gb.shape != b.data.shape:
            gb = gb.sum()
        _accum(a, ga)
        _accum(b, gb)

    return _make(a.data * b.data, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for the (m,n)@(n,), (n,)@(n,k) and (m,n)@(n,k) cases."""
    ad, bd = a.data, b.data

    if ad.ndim == 2 and bd.ndim == 1:
        def back(g, a=a, b=b):
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
    elif ad.ndim == 1 and bd.ndim == 2:
        def back(g, a=a, b=b):
            _accum(a, b.data @ g)
            _accum(b, np.outer(a.data, g))
    elif ad.ndim == 2 and bd.ndim == 2:
        def back(g, a=a, b=b):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
    else:
        raise ValueError(f"matmul unsupported ranks {ad.ndim} @ {bd.ndim}")
    return _make(ad @ bd, (a, b), back)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError("dot expects two vectors")

    def back(g, a=a, b=b):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _make(np.dot(a.data, b.data), (a, b), back)


# -- reductions & shape ------------------------------------------------------

def tsum(x: Tensor) -> Tensor:
    def back(g, x=x):
        _accum(x, np.full_like(x.data, g))

    return _make(x.data.sum(), (x,), back)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size

    def back(g, x=x, n=n):
        _accum(x, np.full_like(x.data, g / n))

    return _make(x.data.mean(), (x,), back)


def mean_rows(x: Tensor) -> Tensor:
    """Mean over axis 0 of a (n, d) matrix -> (d,) vector."""
    n = x.data.shape[0]

    def back(g, x=x, n=n):
        _accum(x, np.broadcast_to(g / n, x.data.shape))

    return _make(x.data.mean(axis=0), (x,), back)


def concat(parts: list) -> Tensor:
    sizes = [p.data.shape[0] for p in parts]

    def back(g, parts=tuple(parts), sizes=tuple(sizes)):
        off = 0
        for p, s in zip(parts, sizes):
            _accum(p, g[off:off + s])
            off += s

    return _make(np.concatenate([p.data for p in parts]), tuple(parts), back)


def stack(rows: list) -> Tensor:
    """Stack (d,) vectors into an (n, d) matrix."""
    def back(g, rows=tuple(rows)):
        for i, r in enumerate(rows):
            _accum(r, g[i])

    return _make(np.stack([r.data for r in rows]), tuple(rows), back)


def slice1d(x: Tensor, start: int, stop: int) -> Tensor:
    def back(g, x=x, start=start, stop=stop):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accum(x, full)

    return _make(x.data[start:stop].copy(), (x,), back)


def pick(x: Tensor, i: int) -> Tensor:
    """Scalar element of a vector."""
    def back(g, x=x, i=i):
        full = np.zeros_like(x.data)
        full[i] = g
        _accum(x, full)

    return _make(x.data[i], (x,), back)


def take_row(m: Tensor, i: int) -> Tensor:
    """Row of a matrix (embedding lookup)."""
    def back(g, m=m, i=i):
        full = np.zeros_like(m.data)
        full[i] = g
        _accum(m, full)

    return _make(m.data[i].copy(), (m,), back)


def stop_grad(x: Tensor) -> Tensor:
    return Tensor(x.data.copy())


# -- nonlinearities ----------------------------------------------------------

def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def back(g, x=x, y=y):
        _accum(x, g * (1.0 - y * y))

    return _make(y, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def back(g, x=x, y=y):
        _accum(x, g * y * (1.0 - y))

    return _make(y, (x,), back)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x: Tensor) -> Tensor:
    y = np.logaddexp(0.0, x.data)

    def back(g, x=x):
        _accum(x, g * _sigmoid(x.data))

    return _make(y, (x,), back)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def back(g, x=x, y=y):
        _accum(x, g * y)

    return _make(y, (x,), back)


def log(x: Tensor) -> Tensor:
    def back(g, x=x):
        _accum(x, g / x.data)

    return _make(np.log(x.data), (x,), back)


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max()
    e = np.exp(z)
    y = e / e.sum()

    def back(g, x=x, y=y):
        _accum(x, y * (g - np.dot(g, y)))

    return _make(y, (x,), back)


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max()
    lse = np.log(np.exp(z).sum())
    y = z - lse

    def back(g, x=x, y=y):
        _accum(x, g - np.exp(y) * g.sum())

    return _make(y, (x,), back)


def absval(x: Tensor) -> Tensor:
    """Elementwise absolute value; subgradient 0 at 0."""
    def back(g, x=x):
        _accum(x, g * np.sign(x.data))

    return _make(np.abs(x.data), (x,), back)


def l2norm(x: Tensor) -> Tensor:
    """Euclidean norm of a vector; subgradient 0 at the origin."""
    n = float(np.sqrt(np.dot(x.data, x.data)))

    def back(g, x=x, n=n):
        if n > 0.0:
            _accum(x, g * x.data / n)
        else:
            _accum(x, np.zeros_like(x.data))

    return _make(n, (x,), back)


def lstm_step(x: Tensor, h: Tensor, c: Tensor,
              wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM cell step; returns (h_new, c_new).

    Fused into a single graph node (plus two slices) for speed: the model
    unrolls hundreds of these per episode.
    """
    hs = h.data.shape[0]
    z = wx.data @ x.data + wh.data @ h.data + b.data
    i = _sigmoid(z[:hs])
    f = _sigmoid(z[hs:2 * hs])
    gg = np.tanh(z[2 * hs:3 * hs])
    o = _sigmoid(z[3 * hs:])
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc

    def back(g, x=x, h=h, c=c, wx=wx, wh=wh, b=b,
             i=i, f=f, gg=gg, o=o, tc=tc, hs=hs):
        dh, dcn = g[:hs], g[hs:]
        dc_total = dcn + dh * o * (1.0 - tc * tc)
        dz = np.empty(4 * hs)
        dz[:hs] = dc_total * gg * i * (1.0 - i)
        dz[hs:2 * hs] = dc_total * c.data * f * (1.0 - f)
        dz[2 * hs:3 * hs] = dc_total * i * (1.0 - gg * gg)
        dz[3 * hs:] = dh * tc * o * (1.0 - o)
        _accum(wx, np.outer(dz, x.data))
        _accum(wh, np.outer(dz, h.data))
        _accum(b, dz)
        _accum(x, wx.data.T @ dz)
        _accum(h, wh.data.T @ dz)
        _accum(c, dc_total * f)

    hc = _make(np.concatenate([h_new, c_new]), (x, h, c, wx, wh, b), back)
    return slice1d(hc, 0, hs), slice1d(hc, hs, 2 * hs)
