"""Multi-level sentence encoding.

A tokenized, role-masked query becomes three L_max x d_s matrices: the
global BiGRU encoding, and its action/object variants obtained by zeroing
rows outside the corresponding role mask.  Each level is then pooled to a
single d_s vector, either by multi-head self-attention with a learned
1 x L_max output projection over the sequence axis, or (ablation) by the
mean over non-padded rows.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .autograd import Tensor
from .errors import ConfigError


@dataclass
class SentenceLevels:
    """Per-level sentence matrices and their pooled vectors."""

    s_global: Tensor            # (L_max, d_s)
    s_action: Tensor | None     # zero rows off the action mask
    s_object: Tensor | None
    pooled: dict                # level name -> (d_s,) vector


def pad_mask(mask, l_max: int) -> np.ndarray:
    """Zero-extend (or truncate) a per-token mask to length l_max."""
    out = np.zeros(l_max, dtype=bool)
    trimmed = list(mask)[:l_max]
    out[: len(trimmed)] = trimmed
    return out


def encode_global(embeddings, params) -> Tensor:
    """BiGRU over the word embeddings, fused per position by an affine
    layer with ReLU: row l = f(fwd_l || bwd_l)."""
    h = ops.bi_gru(
        embeddings,
        params["text.fwd.w"], params["text.fwd.u"], params["text.fwd.b"],
        params["text.bwd.w"], params["text.bwd.u"], params["text.bwd.b"],
    )
    return ops.relu(ops.add(ops.matmul(h, params["text.fuse.w"]), params["text.fuse.b"]))


def mask_semantic(s_base: Tensor, mask) -> Tensor:
    """Keep row l iff mask[l]; zero it otherwise."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] != s_base.shape[0]:
        raise ConfigError(
            f"mask length {mask.shape[0]} does not match sequence length {s_base.shape[0]}"
        )
    return ops.mul(s_base, Tensor(mask.astype(np.float64)[:, None]))


def attend_pool(s_x: Tensor, wq, wk, wv, wo, n_heads: int) -> Tensor:
    """Multi-head self-attention over all positions, then pooling of the
    sequence axis by the learned (1, L_max) projection."""
    l_len, d_s = s_x.shape
    if d_s % n_heads != 0:
        raise ConfigError(f"d_s={d_s} not divisible by heads={n_heads}")
    d_h = d_s // n_heads
    scale = 1.0 / np.sqrt(d_h)
    q = ops.matmul(s_x, wq)
    k = ops.matmul(s_x, wk)
    v = ops.matmul(s_x, wv)
    heads = []
    for i in range(n_heads):
        lo, hi = i * d_h, (i + 1) * d_h
        scores = ops.mul(
            ops.matmul(ops.slice_last(q, lo, hi), ops.transpose(ops.slice_last(k, lo, hi))),
            scale,
        )
        heads.append(ops.matmul(ops.softmax_last_dim(scores), ops.slice_last(v, lo, hi)))
    pooled = ops.matmul(wo, ops.concat_last_dim(heads))  # (1, d_s)
    return ops.reshape(pooled, (d_s,))


def mean_pool(s_x: Tensor, valid_len: int) -> Tensor:
    """Mean over the first valid_len rows (zero vector when empty)."""
    l_len, d_s = s_x.shape
    weights = np.zeros((1, l_len))
    if valid_len > 0:
        weights[0, :valid_len] = 1.0 / valid_len
    return ops.reshape(ops.matmul(Tensor(weights), s_x), (d_s,))


def encode_sentence(embeddings, valid_len, action_mask, object_mask, params, config) -> SentenceLevels:
    """Full sentence pipeline: global encoding, role masking, pooling.

    Disabled levels (ablations) are omitted from ``pooled``; with
    self-attention disabled every level is mean-pooled instead.
    """
    s_g = encode_global(ops.as_tensor(embeddings), params)
    levels = {"g": s_g}
    if config.use_action:
        levels["a"] = mask_semantic(s_g, pad_mask(action_mask, config.l_max))
    if config.use_object:
        levels["o"] = mask_semantic(s_g, pad_mask(object_mask, config.l_max))
    pooled = {}
    for x, mat in levels.items():
        if config.use_self_attention:
            pooled[x] = attend_pool(
                mat,
                params[f"attn.{x}.wq"], params[f"attn.{x}.wk"],
                params[f"attn.{x}.wv"], params[f"attn.{x}.wo"],
                config.heads,
            )
        else:
            pooled[x] = mean_pool(mat, valid_len)
    return SentenceLevels(
        s_global=s_g,
        s_action=levels.get("a"),
        s_object=levels.get("o"),
        pooled=pooled,
    )
