"""Parameter construction and the composed forward pass.

``build_params`` registers every learnable tensor for a configuration
(ablation flags change the registry and therefore the parameter count);
``forward`` runs one record through encoding, fusion, ranking, and
boundary regression.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .data import RunConfig, embed_tokens
from .errors import DimensionError
from .fusion import fuse
from .localizer import (
    CandidateSet,
    enumerate_candidates,
    fuse_scores,
    localize,
    rank_level,
    refine,
    regress_offsets,
)
from .params import ParamRegistry
from .text_encoder import encode_sentence, pad_mask
from .video_encoder import encode_video


@dataclass
class SampleInputs:
    embeddings: np.ndarray   # (l_max, d_w)
    valid_len: int
    action_mask: np.ndarray  # bool (l_max,)
    object_mask: np.ndarray
    features: np.ndarray     # (t_units, d_v)


@dataclass
class ForwardOutputs:
    candidates: CandidateSet
    level_scores: dict       # level -> (K,) Tensor in (0,1)
    fused_scores: Tensor     # (K,)
    offset_start: Tensor     # (K,)
    offset_end: Tensor
    refined_start: Tensor    # (K,) clamped, ordered
    refined_end: Tensor


def build_params(config: RunConfig) -> ParamRegistry:
    reg = ParamRegistry(config.seed)
    d_s, d_f, d_v, d_w = config.d_s, config.d_f, config.d_v, config.d_w
    levels = config.enabled_levels()

    def gru(prefix: str, d_in: int, d_h: int) -> None:
        reg.add(f"{prefix}.w", (d_in, 3 * d_h), fan_in=d_in)
        reg.add(f"{prefix}.u", (d_h, 3 * d_h), fan_in=d_h)
        reg.add(f"{prefix}.b", (3 * d_h,), fan_in=d_in)

    def affine(prefix: str, d_in: int, d_out: int) -> None:
        reg.add(f"{prefix}.w", (d_in, d_out), fan_in=d_in)
        reg.add(f"{prefix}.b", (d_out,), fan_in=d_in)

    gru("text.fwd", d_w, d_s)
    gru("text.bwd", d_w, d_s)
    affine("text.fuse", 2 * d_s, d_s)
    if config.use_self_attention:
        for x in levels:
            reg.add(f"attn.{x}.wq", (d_s, d_s), fan_in=d_s)
            reg.add(f"attn.{x}.wk", (d_s, d_s), fan_in=d_s)
            reg.add(f"attn.{x}.wv", (d_s, d_s), fan_in=d_s)
            reg.add(f"attn.{x}.wo", (1, config.l_max), fan_in=config.l_max)

    gru("video.fwd", d_v, d_s)
    gru("video.bwd", d_v, d_s)
    affine("video.fuse", 2 * d_s, d_s)
    if config.use_action:
        affine("video.proj.a", d_s, d_s)
    if config.use_object:
        affine("video.proj.o", d_s, d_s)

    for x in levels:
        if config.use_res_bigru:
            for m in range(config.m):
                gru(f"fusion.{x}.block{m}.fwd", d_f, d_f // 2)
                gru(f"fusion.{x}.block{m}.bwd", d_f, d_f // 2)
                affine(f"fusion.{x}.block{m}.fc", d_f, d_f)
        else:
            affine(f"fusion.{x}.fc", d_f, d_f)

    for x in levels:
        for w in config.filter_sizes:
            reg.add(f"rank.{x}.w{w}.kernel", (w, d_f, 1), fan_in=w * d_f)
            reg.add(f"rank.{x}.w{w}.bias", (1,), fan_in=w * d_f)
    for side in ("start", "end"):
        for w in config.filter_sizes:
            reg.add(f"offset.{side}.w{w}.kernel", (w, d_f, 1), fan_in=w * d_f)
            reg.add(f"offset.{side}.w{w}.bias", (1,), fan_in=w * d_f)
    affine("score_fuse", len(levels), 1)
    return reg


def prepare_inputs(record, table, config: RunConfig, features: np.ndarray) -> SampleInputs:
    """Embed the query, pad role masks, and bundle the (resampled) features."""
    return SampleInputs(
        embeddings=embed_tokens(record.tokens, table, config.l_max),
        valid_len=min(len(record.tokens), config.l_max),
        action_mask=pad_mask(record.action_mask, config.l_max),
        object_mask=pad_mask(record.object_mask, config.l_max),
        features=features,
    )


def forward(params: ParamRegistry, config: RunConfig, inputs: SampleInputs) -> ForwardOutputs:
    if inputs.features.shape != (config.t_units, config.d_v):
        raise DimensionError(
            f"features have shape {inputs.features.shape}, "
            f"expected ({config.t_units}, {config.d_v})"
        )
    levels = config.enabled_levels()
    sent = encode_sentence(
        inputs.embeddings, inputs.valid_len, inputs.action_mask, inputs.object_mask,
        params, config,
    )
    vid = encode_video(inputs.features, params, config)
    candidates = enumerate_candidates(config.t_units, config.filter_sizes)
    level_scores = {}
    fused_seq = {}
    for x in levels:
        f_hat = fuse(vid[x], sent.pooled[x], params, x, config.m, config.use_res_bigru)
        fused_seq[x] = f_hat
        level_scores[x] = rank_level(f_hat, params, f"rank.{x}", candidates)
    fused = fuse_scores(level_scores, params, levels)
    d_start, d_end = regress_offsets(fused_seq["g"], params, candidates)
    refined_start, refined_end = refine(candidates, d_start, d_end, config.t_units)
    return ForwardOutputs(
        candidates=candidates,
        level_scores=level_scores,
        fused_scores=fused,
        offset_start=d_start,
        offset_end=d_end,
        refined_start=refined_start,
        refined_end=refined_end,
    )


def predict_moments(params, config, inputs, duration: float, top_m: int = 1):
    """Ranked refined moments (seconds) for one record; run without a tape."""
    out = forward(params, config, inputs)
    return localize(
        out.fused_scores.data,
        out.refined_start.data,
        out.refined_end.data,
        duration,
        config.t_units,
        top_m,
    )
