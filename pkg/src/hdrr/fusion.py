"""Adaptive video-sentence fusion: a depth-M stack of residual BiGRU blocks.

Per level, the pooled sentence vector is appended to every video row
(F_0, width d_f = 2*d_s).  Block m computes H = affine(BiGRU(F)) and
emits ReLU(H + F); the affine layer carries no inner nonlinearity since
ReLU follows the residual sum.  The no-Res-BiGRU ablation replaces the
whole stack with a single row-wise affine + ReLU.
"""

import numpy as np

from . import ops
from .autograd import Tensor
from .errors import ConfigError, DimensionError


def build_f0(v_x: Tensor, s_x: Tensor) -> Tensor:
    """Row t of F_0 is v_t || s, broadcasting the sentence vector."""
    if v_x.ndim != 2 or s_x.ndim != 1 or v_x.shape[1] != s_x.shape[0]:
        raise DimensionError(
            f"build_f0 expects (T,d) video and (d,) sentence, got {v_x.shape} and {s_x.shape}"
        )
    t_len = v_x.shape[0]
    tiled = ops.matmul(Tensor(np.ones((t_len, 1))), ops.reshape(s_x, (1, s_x.shape[0])))
    return ops.concat_last_dim(v_x, tiled)


def res_block(f_prev: Tensor, params, prefix: str) -> Tensor:
    d_f = f_prev.shape[1]
    if d_f % 2 != 0:
        raise ConfigError(f"residual BiGRU blocks need even d_f, got {d_f}")
    h = ops.bi_gru(
        f_prev,
        params[f"{prefix}.fwd.w"], params[f"{prefix}.fwd.u"], params[f"{prefix}.fwd.b"],
        params[f"{prefix}.bwd.w"], params[f"{prefix}.bwd.u"], params[f"{prefix}.bwd.b"],
    )
    h_m = ops.add(ops.matmul(h, params[f"{prefix}.fc.w"]), params[f"{prefix}.fc.b"])
    return ops.relu(ops.add(h_m, f_prev))


def fuse(v_x: Tensor, s_x: Tensor, params, level: str, depth: int, use_res_bigru: bool) -> Tensor:
    """Fused (T, d_f) sequence for one level."""
    if depth < 1:
        raise ConfigError(f"fusion depth must be >= 1, got {depth}")
    f = build_f0(v_x, s_x)
    if use_res_bigru:
        for m in range(depth):
            f = res_block(f, params, f"fusion.{level}.block{m}")
    else:
        f = ops.relu(
            ops.add(ops.matmul(f, params[f"fusion.{level}.fc.w"]), params[f"fusion.{level}.fc.b"])
        )
    return f
