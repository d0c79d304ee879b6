"""Moment candidate generation, ranking, score fusion, and boundary
regression.

Candidates are fixed-length unit spans: each retained filter size w
contributes positions p = 0..T-w, span (p, p+w-1).  Ranking applies one
per-scale valid convolution (d_f -> 1) over the fused sequence followed
by a sigmoid; the fused score passes the concatenated level scores
through an affine layer and another sigmoid (the alignment loss needs
scores in (0,1)).  Offsets come from two sigmoid-free convolution stacks
over the global level only; refined boundaries are clamped to [0, T-1]
and reordered if the offsets crossed them.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import ops
from .autograd import Tensor
from .errors import ConfigError


@dataclass
class CandidateSet:
    """Flat enumeration of multi-scale candidates (shared by all levels)."""

    t_start: np.ndarray    # (K,) int
    t_end: np.ndarray      # (K,) int, inclusive
    scale: np.ndarray      # (K,) filter size of each candidate
    sizes: list            # retained filter sizes, ascending

    @property
    def count(self) -> int:
        return self.t_start.shape[0]


@dataclass
class Moment:
    start_seconds: float
    end_seconds: float
    score: float
    candidate_index: int


def enumerate_candidates(t_units: int, filter_sizes) -> CandidateSet:
    """All (p, p+w-1) spans, ascending by scale then by position.

    Oversized filters (w > T) are dropped with a warning; an empty result
    is a configuration error.
    """
    sizes = sorted(set(int(w) for w in filter_sizes))
    retained = []
    for w in sizes:
        if w > t_units:
            warnings.warn(
                f"filter size {w} exceeds {t_units} units and was dropped", stacklevel=2
            )
        elif w >= 1:
            retained.append(w)
    if not retained:
        raise ConfigError(
            f"no admissible filter sizes for t_units={t_units} (got {list(filter_sizes)})"
        )
    starts, ends, scales = [], [], []
    for w in retained:
        positions = np.arange(t_units - w + 1)
        starts.append(positions)
        ends.append(positions + w - 1)
        scales.append(np.full(positions.shape[0], w))
    return CandidateSet(
        t_start=np.concatenate(starts),
        t_end=np.concatenate(ends),
        scale=np.concatenate(scales),
        sizes=retained,
    )


def _conv_stack(f_hat: Tensor, params, prefix: str, sizes) -> Tensor:
    """Concatenate per-scale conv outputs in candidate enumeration order."""
    pieces = []
    for w in sizes:
        out = ops.conv1d(f_hat, params[f"{prefix}.w{w}.kernel"], params[f"{prefix}.w{w}.bias"])
        pieces.append(ops.reshape(out, (out.shape[0],)))
    return ops.concat_last_dim(pieces)


def rank_level(f_hat: Tensor, params, prefix: str, candidates: CandidateSet) -> Tensor:
    """Per-candidate ranking scores in (0,1) for one level."""
    return ops.sigmoid(_conv_stack(f_hat, params, prefix, candidates.sizes))


def fuse_scores(level_scores: dict, params, levels) -> Tensor:
    """Affine map over the concatenated per-level scores, then sigmoid."""
    k = level_scores[levels[0]].shape[0]
    cols = [ops.reshape(level_scores[x], (k, 1)) for x in levels]
    fused = ops.add(ops.matmul(ops.concat_last_dim(cols), params["score_fuse.w"]),
                    params["score_fuse.b"])
    return ops.reshape(ops.sigmoid(fused), (k,))


def regress_offsets(f_hat_g: Tensor, params, candidates: CandidateSet):
    """Real-valued start/end offsets (unit coordinates), no activation."""
    d_start = _conv_stack(f_hat_g, params, "offset.start", candidates.sizes)
    d_end = _conv_stack(f_hat_g, params, "offset.end", candidates.sizes)
    return d_start, d_end


def refine(candidates: CandidateSet, d_start: Tensor, d_end: Tensor, t_units: int):
    """Apply offsets, clamp to [0, T-1], and reorder crossed boundaries."""
    hi = float(t_units - 1)
    s = ops.clamp(ops.add(Tensor(candidates.t_start.astype(np.float64)), d_start), 0.0, hi)
    e = ops.clamp(ops.add(Tensor(candidates.t_end.astype(np.float64)), d_end), 0.0, hi)
    return ops.minimum(s, e), ops.maximum(s, e)


def unit_span_to_seconds(xi_start: float, xi_end: float, duration: float, t_units: int):
    """End-exclusive mapping: a span covering all units maps to the full
    duration (unit coordinate e corresponds to time (e+1) * duration/T)."""
    return xi_start * duration / t_units, (xi_end + 1.0) * duration / t_units


def seconds_to_unit_interval(start_s: float, end_s: float, duration: float, t_units: int):
    """Continuous [start, end) interval in unit coordinates."""
    return start_s * t_units / duration, end_s * t_units / duration


def localize(scores: np.ndarray, refined_start: np.ndarray, refined_end: np.ndarray,
             duration: float, t_units: int, top_m: int):
    """Top-m refined moments in seconds, ranked by fused score.

    Ties break toward the smaller enumeration index, so rankings are
    deterministic.
    """
    order = np.argsort(-scores, kind="stable")[: max(1, top_m)]
    moments = []
    for k in order:
        start_s, end_s = unit_span_to_seconds(
            float(refined_start[k]), float(refined_end[k]), duration, t_units
        )
        moments.append(
            Moment(start_seconds=start_s, end_seconds=end_s,
                   score=float(scores[k]), candidate_index=int(k))
        )
    return moments
