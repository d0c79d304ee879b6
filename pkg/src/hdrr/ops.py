"""Differentiable operations.

Everything the model needs: matrix products, elementwise maps (relu,
sigmoid, tanh, add, mul, concat/softmax over the last dimension), valid
1-D convolution, GRU cells and fused GRU sequence scans, smooth-L1, and
the small glue ops (reshape, transpose, slicing, reductions, clamping).

Each op validates shapes eagerly, computes the forward value with numpy
(or a compiled kernel), and registers a backward closure via
:func:`hdrr.autograd.record_op`.
"""

import numpy as np

from .autograd import Tensor, record_op
from .errors import ConfigError, DimensionError, UsageError
from .kernels import conv as _conv_kernels
from .kernels import gru as _gru_kernels


def as_tensor(x) -> Tensor:
    """Wrap plain scalars/arrays as constant (non-grad) tensors."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _contig(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands with numpy matmul semantics."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(
            f"matmul supports 1-D/2-D operands, got shapes {a.shape} and {b.shape}"
        )
    a2 = a.data if a.ndim == 2 else a.data[None, :]
    b2 = b.data if b.ndim == 2 else b.data[:, None]
    if a2.shape[1] != b2.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}"
        )
    out2 = a2 @ b2
    data = out2
    if b.ndim == 1:
        data = data[..., 0]
    if a.ndim == 1:
        data = data[0]

    def grad_fn(g):
        g2 = g.reshape(out2.shape)
        return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)

    return record_op(data, (a, b), grad_fn)


def transpose(t) -> Tensor:
    t = as_tensor(t)
    if t.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got shape {t.shape}")
    return record_op(t.data.T.copy(), (t,), lambda g: (g.T,))


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    shape = tuple(shape)
    try:
        data = t.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {t.shape} to {shape}: {exc}") from exc
    old = t.shape
    return record_op(data.copy(), (t,), lambda g: (g.reshape(old),))


def flip0(t) -> Tensor:
    """Reverse along the first axis (sequence reversal)."""
    t = as_tensor(t)
    return record_op(np.flip(t.data, axis=0).copy(), (t,), lambda g: (np.flip(g, axis=0),))


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def _broadcast_op(a, b, fwd, grad_a, grad_b, name):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(
            f"{name}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from exc

    def grad_fn(g):
        return (
            _unbroadcast(grad_a(g, a.data, b.data), a.shape),
            _unbroadcast(grad_b(g, a.data, b.data), b.shape),
        )

    return record_op(data, (a, b), grad_fn)


def add(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b) -> Tensor:
    return _broadcast_op(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b) -> Tensor:
    return _broadcast_op(
        a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul"
    )


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties route the gradient to the first operand."""
    return _broadcast_op(
        a,
        b,
        np.minimum,
        lambda g, x, y: g * (x <= y),
        lambda g, x, y: g * (x > y),
        "minimum",
    )


def maximum(a, b) -> Tensor:
    """Elementwise maximum; ties route the gradient to the first operand."""
    return _broadcast_op(
        a,
        b,
        np.maximum,
        lambda g, x, y: g * (x >= y),
        lambda g, x, y: g * (x < y),
        "maximum",
    )


def neg(t) -> Tensor:
    t = as_tensor(t)
    return record_op(-t.data, (t,), lambda g: (-g,))


def relu(t) -> Tensor:
    t = as_tensor(t)
    mask = t.data > 0
    return record_op(np.where(mask, t.data, 0.0), (t,), lambda g: (g * mask,))


def _sigmoid_arr(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    y = _sigmoid_arr(np.atleast_1d(t.data)).reshape(t.shape)
    return record_op(y, (t,), lambda g: (g * y * (1.0 - y),))


def tanh(t) -> Tensor:
    t = as_tensor(t)
    y = np.tanh(t.data)
    return record_op(y, (t,), lambda g: (g * (1.0 - y * y),))


def log(t) -> Tensor:
    t = as_tensor(t)
    if not np.all(t.data > 0):
        raise UsageError("log requires strictly positive input")
    return record_op(np.log(t.data), (t,), lambda g: (g / t.data,))


def clamp(t, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient passes only inside the bounds."""
    t = as_tensor(t)
    mask = (t.data >= lo) & (t.data <= hi)
    return record_op(np.clip(t.data, lo, hi), (t,), lambda g: (g * mask,))


def smooth_l1(t) -> Tensor:
    """Elementwise smooth-L1: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise."""
    t = as_tensor(t)
    x = t.data
    small = np.abs(x) < 1.0
    data = np.where(small, 0.5 * x * x, np.abs(x) - 0.5)
    return record_op(data, (t,), lambda g: (g * np.where(small, x, np.sign(x)),))


# ---------------------------------------------------------------------------
# shape-structured ops
# ---------------------------------------------------------------------------


def concat_last_dim(*tensors) -> Tensor:
    """Concatenate along the last dimension (axis 0 for 1-D inputs)."""
    if len(tensors) == 1 and isinstance(tensors[0], (list, tuple)):
        tensors = tuple(tensors[0])
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat_last_dim needs at least one tensor")
    lead = ts[0].shape[:-1]
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or t.shape[:-1] != lead:
            raise DimensionError(
                f"concat_last_dim: leading shapes differ: {[t.shape for t in ts]}"
            )
    widths = [t.shape[-1] for t in ts]
    data = np.concatenate([t.data for t in ts], axis=-1)
    offsets = np.cumsum(widths)[:-1]

    def grad_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=-1))

    return record_op(data, ts, grad_fn)


def slice_last(t, start: int, stop: int) -> Tensor:
    """Narrow the last dimension to [start, stop)."""
    t = as_tensor(t)
    if not (0 <= start <= stop <= t.shape[-1]):
        raise DimensionError(
            f"slice_last [{start}:{stop}] out of range for shape {t.shape}"
        )
    data = t.data[..., start:stop].copy()
    shape = t.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return record_op(data, (t,), grad_fn)


def take(t, index: int) -> Tensor:
    """Select one element of a 1-D tensor as a scalar."""
    t = as_tensor(t)
    if t.ndim != 1:
        raise DimensionError(f"take expects a 1-D tensor, got shape {t.shape}")
    if not (0 <= index < t.shape[0]):
        raise UsageError(f"take index {index} out of range for length {t.shape[0]}")
    n = t.shape[0]

    def grad_fn(g):
        full = np.zeros(n)
        full[index] = g
        return (full,)

    return record_op(np.asarray(t.data[index]), (t,), grad_fn)


def softmax_last_dim(t) -> Tensor:
    t = as_tensor(t)
    if t.ndim == 0 or t.shape[-1] == 0:
        raise DimensionError(f"softmax needs a non-empty last dimension, got {t.shape}")
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record_op(y, (t,), grad_fn)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def tsum(t) -> Tensor:
    """Sum of all elements (scalar output)."""
    t = as_tensor(t)
    shape = t.shape
    return record_op(np.asarray(t.data.sum()), (t,), lambda g: (np.broadcast_to(g, shape).copy(),))


def tmean(t) -> Tensor:
    """Mean of all elements (scalar output)."""
    t = as_tensor(t)
    shape, n = t.shape, t.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")
    return record_op(
        np.asarray(t.data.mean()), (t,), lambda g: (np.broadcast_to(g / n, shape).copy(),)
    )


# ---------------------------------------------------------------------------
# convolution and recurrence
# ---------------------------------------------------------------------------


def conv1d(inp, kern, bias) -> Tensor:
    """Valid 1-D convolution: (T, C) x (w, C, O) -> (T-w+1, O), stride 1."""
    inp, kern, bias = as_tensor(inp), as_tensor(kern), as_tensor(bias)
    if inp.ndim != 2 or kern.ndim != 3 or bias.ndim != 1:
        raise DimensionError(
            f"conv1d expects input (T,C), kernel (w,C,O), bias (O); "
            f"got {inp.shape}, {kern.shape}, {bias.shape}"
        )
    t_len, c_in = inp.shape
    w, kc, c_out = kern.shape
    if kc != c_in or bias.shape[0] != c_out:
        raise DimensionError(
            f"conv1d: channel mismatch between input {inp.shape}, "
            f"kernel {kern.shape}, bias {bias.shape}"
        )
    if w > t_len:
        raise ConfigError(
            f"conv1d filter size {w} exceeds sequence length {t_len}; "
            f"drop this filter size from the configuration"
        )
    x, k = _contig(inp.data), _contig(kern.data)
    out = _conv_kernels.conv_forward(x, k, _contig(bias.data))

    def grad_fn(g):
        dinp, dkern, dbias = _conv_kernels.conv_backward(_contig(g), x, k)
        return dinp, dkern, dbias

    return record_op(out, (inp, kern, bias), grad_fn)


def gru_cell(x, h_prev, w, u, b) -> Tensor:
    """One GRU step, composed from primitive ops.

    Gates: z = sigmoid(W_z x + U_z h + b_z), r likewise, candidate
    n = tanh(W_n x + U_n (r*h) + b_n), output h' = (1-z)*h + z*n.
    Weights are packed column-wise as [z | r | n]: w (d_in, 3H),
    u (H, 3H), b (3H,).
    """
    x, h_prev, w, u, b = (as_tensor(t) for t in (x, h_prev, w, u, b))
    if x.ndim != 1 or h_prev.ndim != 1:
        raise DimensionError(
            f"gru_cell expects 1-D x and h_prev, got {x.shape} and {h_prev.shape}"
        )
    h = h_prev.shape[0]
    if w.shape != (x.shape[0], 3 * h) or u.shape != (h, 3 * h) or b.shape != (3 * h,):
        raise DimensionError(
            f"gru_cell weight shapes {w.shape}/{u.shape}/{b.shape} inconsistent "
            f"with d_in={x.shape[0]}, d_h={h}"
        )
    gx = add(matmul(x, w), b)
    z = sigmoid(add(slice_last(gx, 0, h), matmul(h_prev, slice_last(u, 0, h))))
    r = sigmoid(add(slice_last(gx, h, 2 * h), matmul(h_prev, slice_last(u, h, 2 * h))))
    n = tanh(
        add(slice_last(gx, 2 * h, 3 * h), matmul(mul(r, h_prev), slice_last(u, 2 * h, 3 * h)))
    )
    return add(mul(sub(1.0, z), h_prev), mul(z, n))


def gru_sequence(x, w, u, b) -> Tensor:
    """Full GRU scan over (T, d_in) from a zero initial state, as one op.

    Equivalent to folding :func:`gru_cell` over the rows of ``x`` but runs
    through the compiled kernels; the backward pass is the matching
    reverse scan.  Returns the (T, H) hidden-state sequence.
    """
    x, w, u, b = (as_tensor(t) for t in (x, w, u, b))
    if x.ndim != 2 or w.ndim != 2 or w.shape[1] % 3 != 0:
        raise DimensionError(
            f"gru_sequence expects x (T,d_in) and packed w (d_in,3H); "
            f"got {x.shape} and {w.shape}"
        )
    h = w.shape[1] // 3
    if w.shape[0] != x.shape[1] or u.shape != (h, 3 * h) or b.shape != (3 * h,):
        raise DimensionError(
            f"gru_sequence weight shapes {w.shape}/{u.shape}/{b.shape} inconsistent "
            f"with input {x.shape}"
        )
    h0 = np.zeros(h)
    xp = _contig(x.data @ w.data + b.data)
    u_arr = _contig(u.data)
    hs, zs, rs, ns = _gru_kernels.gru_forward(xp, u_arr, h0)

    def grad_fn(g):
        dxp, du, _dh0 = _gru_kernels.gru_backward(_contig(g), u_arr, h0, hs, zs, rs, ns)
        return dxp @ w.data.T, x.data.T @ dxp, du, dxp.sum(axis=0)

    return record_op(hs, (x, w, u, b), grad_fn)


def bi_gru(x, wf, uf, bf, wb, ub, bb) -> Tensor:
    """Bidirectional GRU over (T, d_in): forward scan and reversed scan
    concatenated per position, giving (T, 2H)."""
    fwd = gru_sequence(x, wf, uf, bf)
    rev = flip0(gru_sequence(flip0(x), wb, ub, bb))
    return concat_last_dim(fwd, rev)


# Operator sugar on Tensor (defined here to avoid an import cycle).
Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
