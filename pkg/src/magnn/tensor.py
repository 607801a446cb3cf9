"""Minimal dense tensor arithmetic with reverse-mode gradients.

Values are float64 numpy arrays of up to 3 axes.  Each operation records a
backward closure on its output; calling :func:`backward` on a scalar loss
walks the recorded graph in reverse topological order and accumulates
gradients into every tensor created with requires_grad=True.

Variable-length groups along a flat axis (the per-target-node instance
blocks) are described by a :class:`SegmentLayout`; segment-softmax and
segment-weighted-sum aggregate within each group independently.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 3:
            raise ValueError("tensors are limited to 3 axes")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # operator sugar; every op is also available as a module function
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class SegmentLayout:
    """Offsets delimiting variable-length groups within a flat axis."""

    def __init__(self, offsets):
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.ndim != 1 or len(offsets) < 1:
            raise ValueError("offsets must be a 1-D array with at least one entry")
        if np.any(np.diff(offsets) < 0) or offsets[0] != 0:
            raise ValueError("offsets must start at 0 and be nondecreasing")
        self.offsets = offsets
        self.num_segments = len(offsets) - 1
        self.lengths = np.diff(offsets)
        self.total = int(offsets[-1])
        # segment id of each element, for vectorized scatter/gather
        self.ids = np.repeat(np.arange(self.num_segments), self.lengths)

    @classmethod
    def from_lengths(cls, lengths):
        lengths = np.asarray(lengths, dtype=np.int64)
        offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        return cls(offsets)


def _wrap(a) -> Tensor:
    return a if isinstance(a, Tensor) else Tensor(a)


def _record(out: Tensor, parents, backward) -> Tensor:
    if any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = False
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# core ops

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data)

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), bw)


def scale(a, c: float) -> Tensor:
    a = _wrap(a)
    c = float(c)
    out = Tensor(a.data * c)

    def bw(g):
        _accum(a, g * c)

    return _record(out, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim > 2 or b.data.ndim > 2:
        raise ValueError("matmul supports 1-D and 2-D operands only")
    out = Tensor(a.data @ b.data)

    def bw(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:  # dot -> scalar
            _accum(a, g * bd)
            _accum(b, g * ad)
        elif ad.ndim == 2 and bd.ndim == 2:
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:  # (n,m)@(m,) -> (n,)
            _accum(a, np.outer(g, bd))
            _accum(b, ad.T @ g)
        else:  # (m,)@(m,k) -> (k,)
            _accum(a, bd @ g)
            _accum(b, np.outer(ad, g))

    return _record(out, (a, b), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _record(out, tuple(tensors), bw)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _record(out, (a,), bw)


def gather_rows(a, idx) -> Tensor:
    """Select rows of a 2-D (or entries of a 1-D) tensor; scatter-adds on backward."""
    a = _wrap(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(a.data[idx])

    def bw(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        _accum(a, acc)

    return _record(out, (a,), bw)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _record(out, (a,), bw)


def mean_rows(a) -> Tensor:
    """Mean over axis 0."""
    n = a.data.shape[0]
    return scale(tsum(a, axis=0), 1.0 / n)


# ---------------------------------------------------------------------------
# activations and pointwise nonlinearities

def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.where(a.data > 0, a.data, slope * a.data))

    def bw(g):
        _accum(a, g * np.where(a.data > 0, 1.0, slope))

    return _record(out, (a,), bw)


def elu(a, alpha: float = 1.0) -> Tensor:
    a = _wrap(a)
    y = np.where(a.data > 0, a.data, alpha * np.expm1(a.data))
    out = Tensor(y)

    def bw(g):
        _accum(a, g * np.where(a.data > 0, 1.0, y + alpha))

    return _record(out, (a,), bw)


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = np.tanh(a.data)
    out = Tensor(y)

    def bw(g):
        _accum(a, g * (1.0 - y * y))

    return _record(out, (a,), bw)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    y = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    out = Tensor(y)

    def bw(g):
        _accum(a, g * y * (1.0 - y))

    return _record(out, (a,), bw)


def cos(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.cos(a.data))

    def bw(g):
        _accum(a, -g * np.sin(a.data))

    return _record(out, (a,), bw)


def sin(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.sin(a.data))

    def bw(g):
        _accum(a, g * np.cos(a.data))

    return _record(out, (a,), bw)


def clamped_log(a, floor: float = 1e-12) -> Tensor:
    """log(max(a, floor)); gradient is zero on the clamped region."""
    a = _wrap(a)
    clipped = np.maximum(a.data, floor)
    out = Tensor(np.log(clipped))

    def bw(g):
        _accum(a, g * np.where(a.data > floor, 1.0 / clipped, 0.0))

    return _record(out, (a,), bw)


def dropout(a, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales by 1/(1-rate) at train time, identity at eval."""
    a = _wrap(a)
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * keep)

    def bw(g):
        _accum(a, g * keep)

    return _record(out, (a,), bw)


# ---------------------------------------------------------------------------
# softmax family

def row_softmax(a) -> Tensor:
    """Softmax along the last axis of a 2-D tensor."""
    a = _wrap(a)
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def bw(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accum(a, y * (g - dot))

    return _record(out, (a,), bw)


def segment_softmax(a, layout: SegmentLayout) -> Tensor:
    """Softmax within each segment along axis 0; empty segments contribute nothing."""
    a = _wrap(a)
    x = a.data
    if x.shape[0] != layout.total:
        raise ValueError("segment layout does not match axis length")
    cols = x.shape[1:] if x.ndim > 1 else ()
    ids = layout.ids
    maxs = np.full((layout.num_segments,) + cols, -np.inf)
    np.maximum.at(maxs, ids, x)
    e = np.exp(x - maxs[ids])
    sums = np.zeros((layout.num_segments,) + cols)
    np.add.at(sums, ids, e)
    y = e / sums[ids]
    out = Tensor(y)

    def bw(g):
        t = g * y
        dots = np.zeros((layout.num_segments,) + cols)
        np.add.at(dots, ids, t)
        _accum(a, t - y * dots[ids])

    return _record(out, (a,), bw)


def segment_weighted_sum(values, weights, layout: SegmentLayout) -> Tensor:
    """Per segment s: sum_i weights[i] * values[i]; empty segments give zero rows.

    values: (n, d); weights: (n,).  Result: (num_segments, d).
    """
    values, weights = _wrap(values), _wrap(weights)
    v, w = values.data, weights.data
    if v.shape[0] != layout.total or w.shape != (layout.total,):
        raise ValueError("segment layout does not match operand shapes")
    ids = layout.ids
    out_data = np.zeros((layout.num_segments, v.shape[1]))
    np.add.at(out_data, ids, v * w[:, None])
    out = Tensor(out_data)

    def bw(g):
        ge = g[ids]
        _accum(values, ge * w[:, None])
        _accum(weights, (ge * v).sum(axis=1))

    return _record(out, (values, weights), bw)


def segment_multihead_sum(values, weights, layout: SegmentLayout) -> Tensor:
    """Weighted within-segment sums for several weight columns at once.

    values: (n, d); weights: (n, k).  Result: (num_segments, k, d) with
    out[s, j] = sum_{i in segment s} weights[i, j] * values[i].
    """
    values, weights = _wrap(values), _wrap(weights)
    v, w = values.data, weights.data
    if v.shape[0] != layout.total or w.shape[0] != layout.total or w.ndim != 2:
        raise ValueError("segment layout does not match operand shapes")
    ids = layout.ids
    out_data = np.zeros((layout.num_segments, w.shape[1], v.shape[1]))
    np.add.at(out_data, ids, w[:, :, None] * v[:, None, :])
    out = Tensor(out_data)

    def bw(g):
        ge = g[ids]  # (n, k, d)
        _accum(weights, (ge * v[:, None, :]).sum(axis=2))
        _accum(values, (ge * w[:, :, None]).sum(axis=1))

    return _record(out, (values, weights), bw)


# ---------------------------------------------------------------------------
# complex-pair arithmetic (first half real parts, second half imaginary)

def _as_complex(x: np.ndarray) -> np.ndarray:
    d = x.shape[-1]
    if d % 2:
        raise ValueError("complex-pair tensors need even last-axis length")
    return x[..., : d // 2] + 1j * x[..., d // 2:]


def _from_complex(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=-1)


def complex_hadamard(a, b) -> Tensor:
    """Elementwise complex product of two real tensors in pair layout.

    Shapes broadcast along leading axes (e.g. (n, d) with (d,)).
    """
    a, b = _wrap(a), _wrap(b)
    za, zb = _as_complex(a.data), _as_complex(b.data)
    out = Tensor(_from_complex(za * zb))

    def bw(g):
        zg = _as_complex(g)
        _accum(a, _unbroadcast(_from_complex(zg * np.conj(zb)), a.data.shape))
        _accum(b, _unbroadcast(_from_complex(zg * np.conj(za)), b.data.shape))

    return _record(out, (a, b), bw)


# ---------------------------------------------------------------------------
# reverse pass

def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def grad_check(f, params, step: float = 1e-5, max_coords: int = 10, seed: int = 0):
    """Max relative error between analytic and central-difference gradients.

    f() must rebuild the forward pass from the current contents of each
    parameter's .data and return a scalar Tensor.  Up to `max_coords`
    coordinates are sampled per parameter.  Coordinates where the two
    one-sided differences disagree strongly (a kink between x-h and x+h)
    are skipped.
    """
    from .rng import substream

    zero_grads(params)
    loss = f()
    backward(loss)
    analytic = [None if p.grad is None else p.grad.copy() for p in params]
    f0 = float(loss.data)
    rng = substream(seed, "grad-check")

    worst = 0.0
    for p, g in zip(params, analytic):
        if g is None:
            continue
        n = p.data.size
        flat = p.data.reshape(-1)
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            fp = float(f().data)
            flat[c] = orig - step
            fm = float(f().data)
            flat[c] = orig
            central = (fp - fm) / (2 * step)
            fwd = (fp - f0) / step
            bwd_d = (f0 - fm) / step
            if abs(fwd - bwd_d) > 1e-2 * (abs(fwd) + abs(bwd_d) + 1e-6):
                continue  # nondifferentiable point between the evaluations
            a = g.reshape(-1)[c]
            rel = abs(a - central) / (abs(a) + abs(central) + 1e-12)
            worst = max(worst, rel)
    return worst
