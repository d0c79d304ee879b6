"""Valid 1-D convolution kernels (stride 1, no padding).

Input is (T, C), the filter bank (w, C, O), bias (O); the output is
(T - w + 1, O) where position p aggregates input rows p .. p+w-1.
"""

import numpy as np

from . import USE_NUMBA, HAVE_NUMBA


def _conv_forward_loops(inp, kern, bias):
    t_len, c_in = inp.shape
    w, _, c_out = kern.shape
    p_len = t_len - w + 1
    out = np.empty((p_len, c_out))
    for p in range(p_len):
        for o in range(c_out):
            acc = bias[o]
            for i in range(w):
                for c in range(c_in):
                    acc += inp[p + i, c] * kern[i, c, o]
            out[p, o] = acc
    return out


def _conv_backward_loops(dout, inp, kern):
    t_len, c_in = inp.shape
    w, _, c_out = kern.shape
    p_len = dout.shape[0]
    dinp = np.zeros((t_len, c_in))
    dkern = np.zeros((w, c_in, c_out))
    dbias = np.zeros(c_out)
    for p in range(p_len):
        for o in range(c_out):
            g = dout[p, o]
            dbias[o] += g
            for i in range(w):
                for c in range(c_in):
                    dinp[p + i, c] += g * kern[i, c, o]
                    dkern[i, c, o] += g * inp[p + i, c]
    return dinp, dkern, dbias


def conv_forward_numpy(inp, kern, bias):
    """Fallback: one matmul per filter row."""
    t_len = inp.shape[0]
    w, _, c_out = kern.shape
    p_len = t_len - w + 1
    out = np.broadcast_to(bias, (p_len, c_out)).copy()
    for i in range(w):
        out += inp[i : i + p_len] @ kern[i]
    return out


def conv_backward_numpy(dout, inp, kern):
    t_len, c_in = inp.shape
    w = kern.shape[0]
    p_len = dout.shape[0]
    dinp = np.zeros((t_len, c_in))
    dkern = np.empty_like(kern)
    for i in range(w):
        dinp[i : i + p_len] += dout @ kern[i].T
        dkern[i] = inp[i : i + p_len].T @ dout
    return dinp, dkern, dout.sum(axis=0)


if HAVE_NUMBA:
    from numba import njit

    conv_forward_jit = njit(cache=True, nogil=True)(_conv_forward_loops)
    conv_backward_jit = njit(cache=True, nogil=True)(_conv_backward_loops)
else:  # pragma: no cover - exercised only without numba installed
    conv_forward_jit = None
    conv_backward_jit = None

if USE_NUMBA:
    conv_forward = conv_forward_jit
    conv_backward = conv_backward_jit
else:
    conv_forward = conv_forward_numpy
    conv_backward = conv_backward_numpy
