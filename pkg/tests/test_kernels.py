"""Backend equivalence: compiled kernels vs numpy fallback vs plain loops."""

import numpy as np
import pytest

from hdrr import ops
from hdrr.autograd import GradTape, Tensor, backward
from hdrr.kernels import HAVE_NUMBA, active_backend
from hdrr.kernels import conv as conv_k
from hdrr.kernels import gru as gru_k


def _gru_case(rng):
    t_len = int(rng.integers(1, 8))
    d_h = int(rng.integers(1, 6))
    xp = rng.normal(size=(t_len, 3 * d_h))
    u = rng.normal(size=(d_h, 3 * d_h))
    h0 = np.zeros(d_h)
    dh = rng.normal(size=(t_len, d_h))
    return xp, u, h0, dh


def _conv_case(rng):
    t_len = int(rng.integers(2, 9))
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 3))
    w = int(rng.integers(1, t_len + 1))
    inp = rng.normal(size=(t_len, c_in))
    kern = rng.normal(size=(w, c_in, c_out))
    bias = rng.normal(size=c_out)
    dout = rng.normal(size=(t_len - w + 1, c_out))
    return inp, kern, bias, dout


class TestBackendSelection:
    def test_active_backend_is_known(self):
        assert active_backend() in ("numba", "numpy")

    def test_env_documented_values(self):
        # numba is a declared dependency; in this environment it must load
        assert HAVE_NUMBA


class TestGruKernelAgreement:
    @pytest.mark.parametrize("seed", range(8))
    def test_numpy_matches_loop_reference(self, seed):
        xp, u, h0, dh = _gru_case(np.random.default_rng(seed))
        ref_f = gru_k._gru_forward_loops(xp, u, h0)
        np_f = gru_k.gru_forward_numpy(xp, u, h0)
        for a, b in zip(ref_f, np_f):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        ref_b = gru_k._gru_backward_loops(dh, u, h0, *ref_f)
        np_b = gru_k.gru_backward_numpy(dh, u, h0, *np_f)
        for a, b in zip(ref_b, np_b):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    @pytest.mark.parametrize("seed", range(4))
    def test_jit_matches_numpy(self, seed):
        xp, u, h0, dh = _gru_case(np.random.default_rng(100 + seed))
        jit_f = gru_k.gru_forward_jit(xp, u, h0)
        np_f = gru_k.gru_forward_numpy(xp, u, h0)
        for a, b in zip(jit_f, np_f):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
        jit_b = gru_k.gru_backward_jit(dh, u, h0, *jit_f)
        np_b = gru_k.gru_backward_numpy(dh, u, h0, *np_f)
        for a, b in zip(jit_b, np_b):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestConvKernelAgreement:
    @pytest.mark.parametrize("seed", range(8))
    def test_numpy_matches_loop_reference(self, seed):
        inp, kern, bias, dout = _conv_case(np.random.default_rng(seed))
        np.testing.assert_allclose(
            conv_k._conv_forward_loops(inp, kern, bias),
            conv_k.conv_forward_numpy(inp, kern, bias),
            rtol=0,
            atol=1e-12,
        )
        ref = conv_k._conv_backward_loops(dout, inp, kern)
        fast = conv_k.conv_backward_numpy(dout, inp, kern)
        for a, b in zip(ref, fast):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    @pytest.mark.parametrize("seed", range(4))
    def test_jit_matches_numpy(self, seed):
        inp, kern, bias, dout = _conv_case(np.random.default_rng(100 + seed))
        np.testing.assert_allclose(
            conv_k.conv_forward_jit(inp, kern, bias),
            conv_k.conv_forward_numpy(inp, kern, bias),
            rtol=0,
            atol=1e-12,
        )
        ref = conv_k.conv_backward_jit(dout, inp, kern)
        fast = conv_k.conv_backward_numpy(dout, inp, kern)
        for a, b in zip(ref, fast):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestFusedSequenceOp:
    def test_matches_cell_scan(self):
        # the fused kernel must agree with folding the composed cell op
        rng = np.random.default_rng(13)
        t_len, d_in, d_h = 7, 3, 5
        x = Tensor(rng.normal(size=(t_len, d_in)))
        w = Tensor(rng.normal(size=(d_in, 3 * d_h)))
        u = Tensor(rng.normal(size=(d_h, 3 * d_h)))
        b = Tensor(rng.normal(size=3 * d_h))
        seq = ops.gru_sequence(x, w, u, b)
        h = Tensor(np.zeros(d_h))
        for t in range(t_len):
            h = ops.gru_cell(Tensor(x.data[t]), h, w, u, b)
            np.testing.assert_allclose(seq.data[t], h.data, rtol=0, atol=1e-12)

    def test_gradients_match_cell_scan(self):
        rng = np.random.default_rng(14)
        t_len, d_in, d_h = 5, 2, 3
        weights = rng.normal(size=(t_len, d_h))

        def build():
            return (
                Tensor(rng2.normal(size=(t_len, d_in)), requires_grad=True),
                Tensor(rng2.normal(size=(d_in, 3 * d_h)), requires_grad=True),
                Tensor(rng2.normal(size=(d_h, 3 * d_h)), requires_grad=True),
                Tensor(rng2.normal(size=3 * d_h), requires_grad=True),
            )

        rng2 = np.random.default_rng(15)
        x1, w1, u1, b1 = build()
        rng2 = np.random.default_rng(15)
        x2, w2, u2, b2 = build()

        with GradTape():
            out = ops.gru_sequence(x1, w1, u1, b1)
            backward(ops.tsum(ops.mul(out, Tensor(weights))))
        with GradTape():
            h = Tensor(np.zeros(d_h))
            rows = []
            for t in range(t_len):
                h = ops.gru_cell(Tensor(x2.data[t], requires_grad=False), h, w2, u2, b2)
                rows.append(ops.matmul(h, Tensor(weights[t])))
            total = rows[0]
            for r in rows[1:]:
                total = ops.add(total, r)
            backward(total)
        for fused, scanned in ((w1, w2), (u1, u2), (b1, b2)):
            np.testing.assert_allclose(fused.grad, scanned.grad, rtol=1e-10, atol=1e-12)
