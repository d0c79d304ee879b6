"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps an immutable numpy array.  While a
:class:`GradTape` is active on the current thread, every operation from
:mod:`hdrr.ops` records a backward closure; :func:`backward` replays the
tape in reverse, accumulating gradients into every ``requires_grad`` leaf
reachable from the loss, then clears the tape.

Tapes are thread-local: independent forward/backward passes may run
concurrently on separate threads with no sharing.  With no active tape,
operations skip all bookkeeping (cheap inference mode).
"""

import threading

import numpy as np

from .errors import UsageError

_TLS = threading.local()


def _stack():
    stack = getattr(_TLS, "tapes", None)
    if stack is None:
        stack = _TLS.tapes = []
    return stack


class Tensor:
    """Dense float64 array with shape metadata and an optional gradient.

    The data buffer is treated as immutable once the tensor is built;
    operations always allocate fresh outputs.  ``grad``, when present,
    has exactly the shape of ``data`` and accumulates across backward
    passes until reset.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise UsageError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # arithmetic dunders are attached by hdrr.ops to avoid an import cycle


class GradTape:
    """Ordered record of operations for one forward/backward pass."""

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise UsageError("GradTape exited out of order")
        stack.pop()
        return False

    def record(self, out: Tensor, inputs, grad_fn) -> None:
        self._entries.append((out, tuple(inputs), grad_fn))

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


def active_tape():
    """The innermost tape open on this thread, or None."""
    stack = _stack()
    return stack[-1] if stack else None


def record_op(data: np.ndarray, inputs, grad_fn) -> Tensor:
    """Build an op output, recording it when a tape is active.

    ``grad_fn(gout)`` must return one gradient array (or None) per input,
    in order.  Recording is skipped entirely when no tape is active or no
    input requires a gradient.
    """
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, grad_fn)
    return out


def backward(loss: Tensor) -> None:
    """Populate gradients of every requires_grad leaf reachable from ``loss``.

    The loss must be a scalar produced under the currently active tape.
    Gradients accumulate into existing ``grad`` buffers (call
    ``zero_grad`` between optimizer steps).  The tape is cleared.
    """
    tape = active_tape()
    if tape is None:
        raise UsageError("backward() requires an active GradTape")
    if loss.data.size != 1:
        raise UsageError(f"backward() expects a scalar loss, got shape {loss.shape}")
    loss.accumulate_grad(np.ones_like(loss.data))
    for out, inputs, grad_fn in reversed(tape._entries):
        gout = out.grad
        if gout is None:
            continue
        grads = grad_fn(gout)
        for inp, g in zip(inputs, grads):
            if g is not None and inp.requires_grad:
                inp.accumulate_grad(np.asarray(g))
    tape.clear()
