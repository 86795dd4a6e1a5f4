"""Reverse-mode automatic differentiation over dense float64 arrays.

A `Tensor` wraps an ndarray and records the operation that produced it as a
closure; `backward` replays the graph in reverse topological order.  Every
function in this module accepts either Tensors or plain ndarrays and returns
the same kind, so numerical code can be written once and run with or without
gradient tracking.

Gradients accumulate additively into `.grad` and are never cleared
implicitly: calling backward twice doubles them.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, ValidationError

# Arguments of acosh are clamped here; below the clamp the subgradient is zero.
ACOSH_CLAMP = 1.0 + 1e-15

# Threshold for the series branches of the even-function helpers below.
_SERIES_CUTOFF = 1e-6


class Tensor:
    """Node of the differentiation graph (value, gradient accumulator, parents)."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp")

    # make numpy defer mixed ndarray (op) Tensor expressions to our dunders
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- metadata ---------------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self):
        return float(self.value)

    def detach(self):
        return Tensor(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.value)

    # -- autodiff ---------------------------------------------------------
    def backward(self, seed=None):
        """Accumulate gradients of `self` into every reachable `.grad`.

        `self` must be a scalar unless an explicit `seed` array is given.
        """
        if seed is None:
            if self.value.size != 1:
                raise ValidationError(
                    f"backward() needs a scalar loss, got shape {self.value.shape}"
                )
            seed = np.ones_like(self.value)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.value.shape:
                raise DimensionError("seed shape must match tensor shape")

        order = _toposort(self)
        flows = {id(self): seed}
        for node in reversed(order):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = flows.get(id(parent))
                flows[id(parent)] = pg if acc is None else acc + pg

    def zero_grad(self):
        self.grad = None

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    # -- ergonomic method aliases -------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def is_tensor(x):
    return isinstance(x, Tensor)


def value_of(x):
    """Underlying ndarray of a Tensor, or the input coerced to float64."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(value, parents, vjp):
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _binary(a, b, fwd, vjp_factory):
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return fwd(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    a, b = as_tensor(a), as_tensor(b)
    value = fwd(a.value, b.value)
    return _node(value, (a, b), vjp_factory(a.value, b.value, value))


def _unary(x, fwd, vjp_factory):
    if not isinstance(x, Tensor):
        return fwd(np.asarray(x, dtype=np.float64))
    value = fwd(x.value)
    return _node(value, (x,), vjp_factory(x.value, value))


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    return _binary(
        a, b, np.add,
        lambda av, bv, v: lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)),
    )


def subtract(a, b):
    return _binary(
        a, b, np.subtract,
        lambda av, bv, v: lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)),
    )


def multiply(a, b):
    return _binary(
        a, b, np.multiply,
        lambda av, bv, v: lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def divide(a, b):
    return _binary(
        a, b, np.divide,
        lambda av, bv, v: lambda g: (
            _unbroadcast(g / bv, av.shape),
            _unbroadcast(-g * av / (bv * bv), bv.shape),
        ),
    )


def negative(x):
    return _unary(x, np.negative, lambda xv, v: lambda g: (-g,))


def power(x, exponent):
    e = float(exponent)
    return _unary(x, lambda xv: xv ** e, lambda xv, v: lambda g: (g * e * xv ** (e - 1.0),))


# ---------------------------------------------------------------------------
# elementwise functions
# ---------------------------------------------------------------------------

def exp(x):
    return _unary(x, np.exp, lambda xv, v: lambda g: (g * v,))


def log(x):
    return _unary(x, np.log, lambda xv, v: lambda g: (g / xv,))


def sqrt(x):
    return _unary(x, np.sqrt, lambda xv, v: lambda g: (g * 0.5 / v,))


def cosh(x):
    return _unary(x, np.cosh, lambda xv, v: lambda g: (g * np.sinh(xv),))


def sinh(x):
    return _unary(x, np.sinh, lambda xv, v: lambda g: (g * np.cosh(xv),))


def _np_acosh(x):
    return np.arccosh(np.maximum(x, ACOSH_CLAMP))


def acosh(x):
    """acosh with its argument clamped at 1 + 1e-15; zero gradient beyond the clamp."""

    def vjp(xv, v):
        mask = xv >= ACOSH_CLAMP
        xc = np.maximum(xv, ACOSH_CLAMP)
        return lambda g: (g * mask / np.sqrt(xc * xc - 1.0),)

    return _unary(x, _np_acosh, vjp)


def asinh(x):
    return _unary(x, np.arcsinh, lambda xv, v: lambda g: (g / np.sqrt(xv * xv + 1.0),))


def sigmoid(x):
    def fwd(xv):
        out = np.empty_like(xv)
        pos = xv >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
        ex = np.exp(xv[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def fwd_any(xv):
        xv = np.asarray(xv, dtype=np.float64)
        return fwd(xv) if xv.ndim else np.float64(fwd(xv.reshape(1))[0])

    return _unary(x, fwd_any, lambda xv, v: lambda g: (g * v * (1.0 - v),))


def elu(x):
    def fwd(xv):
        return np.where(xv > 0, xv, np.expm1(np.minimum(xv, 0.0)))

    return _unary(x, fwd, lambda xv, v: lambda g: (g * np.where(xv > 0, 1.0, v + 1.0),))


def absolute(x):
    return _unary(x, np.abs, lambda xv, v: lambda g: (g * np.sign(xv),))


def clamp(x, min=None, max=None):
    def fwd(xv):
        return np.clip(xv, min, max)

    def vjp(xv, v):
        mask = np.ones_like(xv)
        if min is not None:
            mask = mask * (xv >= min)
        if max is not None:
            mask = mask * (xv <= max)
        return lambda g: (g * mask,)

    return _unary(x, fwd, vjp)


def where(cond, a, b):
    cond = value_of(cond).astype(bool)
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.where(cond, a, b)
    a, b = as_tensor(a), as_tensor(b)
    value = np.where(cond, a.value, b.value)

    def vjp(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.value.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.value.shape),
        )

    return _node(value, (a, b), vjp)


# ---------------------------------------------------------------------------
# smooth even-function helpers
#
# cosh(sqrt(q)) and sinh(sqrt(q))/sqrt(q) are analytic in q >= 0, so exposing
# them as primitives avoids the 0/0 of norm-based formulations at q = 0 (both
# in the value and, crucially, in the gradient).
# ---------------------------------------------------------------------------

def _np_cosh_sqrt(q):
    q = np.asarray(q, dtype=np.float64)
    small = q < _SERIES_CUTOFF
    qs = np.where(small, 0.0, q)
    with np.errstate(invalid="ignore"):
        direct = np.cosh(np.sqrt(qs))
    series = 1.0 + q / 2.0 + q * q / 24.0
    return np.where(small, series, direct)


def _np_sinhc_sqrt(q):
    q = np.asarray(q, dtype=np.float64)
    small = q < _SERIES_CUTOFF
    qs = np.where(small, 1.0, q)
    with np.errstate(invalid="ignore"):
        r = np.sqrt(qs)
        direct = np.sinh(r) / r
    series = 1.0 + q / 6.0 + q * q / 120.0
    return np.where(small, series, direct)


def _np_sinhc_sqrt_grad(q):
    # d/dq sinh(sqrt(q))/sqrt(q) = (cosh(sqrt q) - sinhc(sqrt q)) / (2 q)
    q = np.asarray(q, dtype=np.float64)
    small = q < _SERIES_CUTOFF
    qs = np.where(small, 1.0, q)
    direct = (_np_cosh_sqrt(qs) - _np_sinhc_sqrt(qs)) / (2.0 * qs)
    series = 1.0 / 6.0 + q / 60.0 + q * q / 1680.0
    return np.where(small, series, direct)


def cosh_sqrt(q):
    """cosh(sqrt(q)) for q >= 0, smooth through q = 0."""
    return _unary(q, _np_cosh_sqrt, lambda qv, v: lambda g: (g * 0.5 * _np_sinhc_sqrt(qv),))


def sinhc_sqrt(q):
    """sinh(sqrt(q))/sqrt(q) for q >= 0, smooth through q = 0."""
    return _unary(q, _np_sinhc_sqrt, lambda qv, v: lambda g: (g * _np_sinhc_sqrt_grad(qv),))


def _np_acosh_over_sqrtm1(x):
    # acosh(x)/sqrt(x^2-1) with a series branch near x = 1
    x = np.asarray(x, dtype=np.float64)
    u = np.maximum(x - 1.0, 0.0)
    small = u < _SERIES_CUTOFF
    us = np.where(small, 1.0, u)
    xs = 1.0 + us
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = np.arccosh(xs) / np.sqrt(xs * xs - 1.0)
    series = 1.0 - u / 3.0 + (2.0 / 15.0) * u * u
    return np.where(small, series, direct)


def _np_acosh_over_sqrtm1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    u = np.maximum(x - 1.0, 0.0)
    small = u < _SERIES_CUTOFF
    us = np.where(small, 1.0, u)
    xs = 1.0 + us
    f = _np_acosh_over_sqrtm1(xs)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = (1.0 - xs * f) / (xs * xs - 1.0)
    series = -1.0 / 3.0 + (4.0 / 15.0) * u
    return np.where(small, series, direct)


def acosh_over_sqrtm1(x):
    """acosh(x)/sqrt(x^2 - 1), the log-map prefactor, smooth through x = 1."""
    return _unary(
        x, _np_acosh_over_sqrtm1, lambda xv, v: lambda g: (g * _np_acosh_over_sqrtm1_grad(xv),)
    )


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    def vjp(xv, v):
        def back(g):
            if axis is None:
                return (np.broadcast_to(g, xv.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, xv.shape).copy(),)

        return back

    return _unary(x, lambda xv: np.sum(xv, axis=axis, keepdims=keepdims), vjp)


def mean(x, axis=None, keepdims=False):
    xv = value_of(x)
    if axis is None:
        count = xv.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([xv.shape[a] for a in axes]))
    return sum_(x, axis=axis, keepdims=keepdims) / float(count)


def norm(x, axis=-1, keepdims=False):
    """Euclidean norm along an axis; subgradient 0 at the origin."""

    def fwd(xv):
        return np.sqrt(np.sum(xv * xv, axis=axis, keepdims=keepdims))

    def vjp(xv, v):
        def back(g):
            vv = v if keepdims else np.expand_dims(v, axis)
            gg = g if keepdims else np.expand_dims(g, axis)
            safe = np.where(vv == 0.0, 1.0, vv)
            return (gg * xv / safe * (vv != 0.0),)

        return back

    return _unary(x, fwd, vjp)


def reshape(x, shape):
    return _unary(
        x, lambda xv: xv.reshape(shape), lambda xv, v: lambda g: (g.reshape(xv.shape),)
    )


def transpose(x, axes=None):
    def vjp(xv, v):
        inv = None if axes is None else tuple(np.argsort(axes))
        return lambda g: (np.transpose(g, inv),)

    return _unary(x, lambda xv: np.transpose(xv, axes), vjp)


def take(x, key):
    """Indexing/slicing with scatter-add backward (supports fancy indices)."""

    def vjp(xv, v):
        def back(g):
            out = np.zeros_like(xv)
            np.add.at(out, key, g)
            return (out,)

        return back

    return _unary(x, lambda xv: xv[key], vjp)


def take_along_axis(x, idx, axis):
    idx = np.asarray(idx)

    def vjp(xv, v):
        def back(g):
            out = np.zeros_like(xv)
            grids = list(np.indices(idx.shape, sparse=False))
            grids[axis] = idx
            np.add.at(out, tuple(grids), g)
            return (out,)

        return back

    return _unary(x, lambda xv: np.take_along_axis(xv, idx, axis=axis), vjp)


def concat(parts, axis=-1):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [as_tensor(p) for p in parts]
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(value, tuple(parts), vjp)


def stack(parts, axis=0):
    expanded = []
    for p in parts:
        if isinstance(p, Tensor):
            expanded.append(reshape(p, p.shape[:axis] + (1,) + p.shape[axis:]))
        else:
            expanded.append(np.expand_dims(value_of(p), axis))
    return concat(expanded, axis=axis)


def matmul(a, b):
    def vjp_factory(av, bv, v):
        def back(g):
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
            return (ga, gb)

        return back

    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise DimensionError("matmul operands must have ndim >= 2")
    return _binary(a, b, np.matmul, vjp_factory)


# ---------------------------------------------------------------------------
# fused losses
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels under softmax(logits)."""
    labels = np.asarray(labels)
    lv = value_of(logits)
    if lv.ndim != 2:
        raise DimensionError("logits must be (batch, classes)")
    if labels.shape != (lv.shape[0],):
        raise DimensionError("labels must be a vector matching the batch size")
    shifted = lv - lv.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1)) + lv.max(axis=1)
    picked = lv[np.arange(lv.shape[0]), labels]
    out_value = np.mean(lse - picked)
    if not isinstance(logits, Tensor):
        return out_value
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    def vjp(g):
        d = probs.copy()
        d[np.arange(lv.shape[0]), labels] -= 1.0
        return (g * d / lv.shape[0],)

    return _node(np.asarray(out_value), (logits,), vjp)


def softmax(logits):
    lv = value_of(logits)
    shifted = lv - lv.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Tape:
    """Registry of named trainable tensors with gradient collection."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name, tensor):
        if name in self._params:
            raise ValidationError(f"duplicate parameter name: {name}")
        if not tensor.requires_grad:
            raise ValidationError(f"parameter {name} must require gradients")
        self._params[name] = tensor
        return tensor

    def parameters(self):
        return dict(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def backward(self, loss):
        """Backpropagate a scalar loss and return {name: gradient}."""
        if not isinstance(loss, Tensor):
            raise ValidationError("loss must be a Tensor")
        if loss.value.size != 1:
            raise ValidationError(f"loss must be scalar, got shape {loss.value.shape}")
        loss.backward()
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.value))
            for name, p in self._params.items()
        }
