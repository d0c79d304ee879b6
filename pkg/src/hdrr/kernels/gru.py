"""GRU sequence scan kernels.

Gate layout is packed column-wise as [update z | reset r | candidate n]:
``xp`` holds the input pre-projections ``X @ W + b`` of shape (T, 3H) and
``u`` the recurrent weights of shape (H, 3H).  One step computes

    z = sigmoid(xp_z + h @ u_z)
    r = sigmoid(xp_r + h @ u_r)
    n = tanh(xp_n + (r * h) @ u_n)
    h' = (1 - z) * h + z * n

Forward returns the hidden states plus the gate activations needed by the
reverse scan; backward returns gradients for xp, u and the initial state.
"""

import math

import numpy as np

from . import USE_NUMBA, HAVE_NUMBA


def _sigmoid_stable(x):
    # branch keeps exp() arguments nonpositive; valid for scalars under numba
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _gru_forward_loops(xp, u, h0):
    t_len = xp.shape[0]
    h_dim = h0.shape[0]
    hs = np.empty((t_len, h_dim))
    zs = np.empty((t_len, h_dim))
    rs = np.empty((t_len, h_dim))
    ns = np.empty((t_len, h_dim))
    h = h0.copy()
    rh = np.empty(h_dim)
    h_new = np.empty(h_dim)
    for t in range(t_len):
        for j in range(h_dim):
            az = xp[t, j]
            ar = xp[t, h_dim + j]
            for i in range(h_dim):
                hi = h[i]
                az += hi * u[i, j]
                ar += hi * u[i, h_dim + j]
            zs[t, j] = _sigmoid_stable(az)
            rs[t, j] = _sigmoid_stable(ar)
        for i in range(h_dim):
            rh[i] = rs[t, i] * h[i]
        for j in range(h_dim):
            an = xp[t, 2 * h_dim + j]
            for i in range(h_dim):
                an += rh[i] * u[i, 2 * h_dim + j]
            n = math.tanh(an)
            ns[t, j] = n
            h_new[j] = (1.0 - zs[t, j]) * h[j] + zs[t, j] * n
        for j in range(h_dim):
            h[j] = h_new[j]
            hs[t, j] = h_new[j]
    return hs, zs, rs, ns


def _gru_backward_loops(dh_out, u, h0, hs, zs, rs, ns):
    t_len, h_dim = dh_out.shape
    dxp = np.empty((t_len, 3 * h_dim))
    du = np.zeros((h_dim, 3 * h_dim))
    carry = np.zeros(h_dim)
    daz = np.empty(h_dim)
    dar = np.empty(h_dim)
    dan = np.empty(h_dim)
    drh = np.empty(h_dim)
    for t in range(t_len - 1, -1, -1):
        for j in range(h_dim):
            hp = h0[j] if t == 0 else hs[t - 1, j]
            z = zs[t, j]
            n = ns[t, j]
            dh = dh_out[t, j] + carry[j]
            dz = dh * (n - hp)
            daz[j] = dz * z * (1.0 - z)
            dan[j] = dh * z * (1.0 - n * n)
            carry[j] = dh * (1.0 - z)
        for i in range(h_dim):
            acc = 0.0
            for j in range(h_dim):
                acc += dan[j] * u[i, 2 * h_dim + j]
            drh[i] = acc
        for i in range(h_dim):
            hp = h0[i] if t == 0 else hs[t - 1, i]
            r = rs[t, i]
            dar[i] = drh[i] * hp * r * (1.0 - r)
            carry[i] += drh[i] * r
        for i in range(h_dim):
            acc = 0.0
            for j in range(h_dim):
                acc += daz[j] * u[i, j] + dar[j] * u[i, h_dim + j]
            carry[i] += acc
        for j in range(h_dim):
            dxp[t, j] = daz[j]
            dxp[t, h_dim + j] = dar[j]
            dxp[t, 2 * h_dim + j] = dan[j]
        for i in range(h_dim):
            hp = h0[i] if t == 0 else hs[t - 1, i]
            rhp = rs[t, i] * hp
            for j in range(h_dim):
                du[i, j] += hp * daz[j]
                du[i, h_dim + j] += hp * dar[j]
                du[i, 2 * h_dim + j] += rhp * dan[j]
    return dxp, du, carry


def _sigmoid_vec(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gru_forward_numpy(xp, u, h0):
    """Vectorized fallback: one numpy matvec pair per time step."""
    t_len = xp.shape[0]
    h_dim = h0.shape[0]
    hs = np.empty((t_len, h_dim))
    zs = np.empty((t_len, h_dim))
    rs = np.empty((t_len, h_dim))
    ns = np.empty((t_len, h_dim))
    u_zr = u[:, : 2 * h_dim]
    u_n = u[:, 2 * h_dim :]
    h = h0
    for t in range(t_len):
        zr = _sigmoid_vec(xp[t, : 2 * h_dim] + h @ u_zr)
        z = zr[:h_dim]
        r = zr[h_dim:]
        n = np.tanh(xp[t, 2 * h_dim :] + (r * h) @ u_n)
        h = (1.0 - z) * h + z * n
        zs[t] = z
        rs[t] = r
        ns[t] = n
        hs[t] = h
    return hs, zs, rs, ns


def gru_backward_numpy(dh_out, u, h0, hs, zs, rs, ns):
    """Reverse scan matching gru_forward_numpy."""
    t_len, h_dim = dh_out.shape
    dxp = np.empty((t_len, 3 * h_dim))
    du = np.zeros((h_dim, 3 * h_dim))
    u_z = u[:, :h_dim]
    u_r = u[:, h_dim : 2 * h_dim]
    u_n = u[:, 2 * h_dim :]
    carry = np.zeros(h_dim)
    for t in range(t_len - 1, -1, -1):
        hp = h0 if t == 0 else hs[t - 1]
        z, r, n = zs[t], rs[t], ns[t]
        dh = dh_out[t] + carry
        daz = dh * (n - hp) * z * (1.0 - z)
        dan = dh * z * (1.0 - n * n)
        drh = dan @ u_n.T
        dar = drh * hp * r * (1.0 - r)
        carry = dh * (1.0 - z) + drh * r + daz @ u_z.T + dar @ u_r.T
        dxp[t, :h_dim] = daz
        dxp[t, h_dim : 2 * h_dim] = dar
        dxp[t, 2 * h_dim :] = dan
        du[:, :h_dim] += np.outer(hp, daz)
        du[:, h_dim : 2 * h_dim] += np.outer(hp, dar)
        du[:, 2 * h_dim :] += np.outer(r * hp, dan)
    return dxp, du, carry


if HAVE_NUMBA:
    from numba import njit

    # rebinding the helper first lets the jitted scans type it; the
    # pure-python reference scans keep working through the dispatcher
    _sigmoid_stable = njit(cache=True, nogil=True)(_sigmoid_stable)
    gru_forward_jit = njit(cache=True, nogil=True)(_gru_forward_loops)
    gru_backward_jit = njit(cache=True, nogil=True)(_gru_backward_loops)
else:  # pragma: no cover - exercised only without numba installed
    gru_forward_jit = None
    gru_backward_jit = None

if USE_NUMBA:
    gru_forward = gru_forward_jit
    gru_backward = gru_backward_jit
else:
    gru_forward = gru_forward_numpy
    gru_backward = gru_backward_numpy
